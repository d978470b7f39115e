//! Capture events to PROV-ML / PROVLake triples, using the prospective
//! specifications for typing and linkage.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::warn;

use crate::capture::{spec_of_workflow_exec, CaptureEvent, EventKind};
use crate::model::{ClassId, Iri, Literal, Namespace, RelationId, SchemaVariant, Term, Triple};
use crate::spec::{
    attribute_iri, environment_iri, persona_iri, store_iri, transformation_iri, workflow_iri, AttributeSpec, Direction,
    Phase, Qualifier, StageKind, StageQualifier, WorkflowSpec,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TranslateError {
    #[error("no specification loaded for workflow {0:?}")]
    UnknownSpec(String),
    #[error("transformation {dt:?} is not declared in {spec:?}")]
    UnknownTransformation { spec: String, dt: String },
    #[error("malformed event: {0}")]
    Malformed(String),
}

/// Loaded prospective specifications, keyed by workflow name.
#[derive(Clone, Default)]
pub struct SpecRegistry {
    specs: BTreeMap<String, Arc<WorkflowSpec>>,
    /// Producer outputs consumed by another workflow. Their values are scoped
    /// globally so that consumers can address them without knowing the
    /// producer's execution.
    global_outputs: HashSet<(String, String, String)>,
}

impl SpecRegistry {
    pub fn new() -> SpecRegistry {
        SpecRegistry::default()
    }

    pub fn insert(&mut self, spec: WorkflowSpec) {
        self.specs.insert(spec.name.clone(), Arc::new(spec));
        self.global_outputs = self
            .specs
            .values()
            .flat_map(|s| {
                s.dataflow_edges.iter().filter_map(move |e| {
                    e.from
                        .workflow
                        .as_ref()
                        .filter(|wf| **wf != s.name)
                        .map(|wf| (wf.clone(), e.from.dt.clone(), e.from.attr.clone()))
                })
            })
            .collect();
    }

    pub fn get(&self, name: &str) -> Option<&Arc<WorkflowSpec>> {
        self.specs.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.specs.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    fn is_global(&self, wf: &str, dt: &str, attr: &str) -> bool {
        self.global_outputs.contains(&(wf.to_string(), dt.to_string(), attr.to_string()))
    }
}

/// Deterministic value identifier: the same (scope, attribute, value) always
/// yields the same IRI. The digest covers datatype and lexical form.
pub fn assign_value_iri(scope: &str, attribute: &Iri, value: &Literal) -> Iri {
    let mut h = Sha256::new();
    for part in [scope, &attribute.full(), &format!("{:?}", value.datatype()), value.lexical()] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    let digest = h.finalize();
    let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    Iri::new(Namespace::Exp, format!("v.{hex}")).expect("hex is a valid local name")
}

pub fn task_iri(task: &str) -> Option<Iri> {
    Iri::new(Namespace::Exp, format!("t.{task}")).ok()
}

pub fn workflow_exec_iri(wf: &str) -> Option<Iri> {
    Iri::new(Namespace::Exp, format!("w.{wf}")).ok()
}

/// Most specific retrospective class of a transformation execution.
pub fn execution_class(spec: &WorkflowSpec, dt: &str) -> ClassId {
    let Some(t) = spec.transformation(dt) else {
        return ClassId::DataTransformationExecution;
    };
    match &t.stage {
        StageQualifier::Stage(StageKind::Training) => ClassId::TrainingExecution,
        StageQualifier::Stage(StageKind::Validation) => ClassId::ValidationExecution,
        StageQualifier::Stage(StageKind::Evaluation) => ClassId::EvaluationExecution,
        StageQualifier::Section { .. } => match spec.root_stage(dt) {
            Some(StageKind::Training) => ClassId::TrainingSectionExecution,
            _ => ClassId::LearningStageSectionExecution,
        },
        StageQualifier::Generic => ClassId::DataTransformationExecution,
    }
}

/// Retrospective class of a value, by qualifier and direction.
pub fn value_class(qualifier: Qualifier, direction: Direction) -> ClassId {
    match (qualifier, direction) {
        (Qualifier::Hyperparameter, Direction::In) => ClassId::LearningHyperparameterValue,
        (Qualifier::Hyperparameter, Direction::Out) => ClassId::ModelHyperparameterValue,
        (Qualifier::Model, _) => ClassId::Model,
        (Qualifier::ModelEvaluation, _) => ClassId::ModelEvaluation,
        (Qualifier::DatasetReference, _) => ClassId::LearningDataset,
        (Qualifier::FeatureSet, _) => ClassId::FeatureSetData,
        (Qualifier::Plain, _) => ClassId::AttributeValue,
    }
}

struct Emit {
    out: Vec<Triple>,
    variant: SchemaVariant,
}

impl Emit {
    fn add(&mut self, s: &Iri, p: RelationId, o: impl Into<Term>) {
        self.out.push(Triple::new(s.clone(), p.iri(), o));
    }

    /// The class plus its materialized superclasses, or only the generic
    /// base class in the generic encoding.
    fn typed(&mut self, s: &Iri, class: ClassId, generic: ClassId) {
        match self.variant {
            SchemaVariant::WithProvMl => {
                for c in class.superclasses() {
                    self.add(s, RelationId::Type, c.iri());
                }
            }
            SchemaVariant::WithoutProvMl => self.add(s, RelationId::Type, generic.iri()),
        }
    }
}

/// Where a value lives: the producing attribute and the scope of its IRI.
struct ValueSite<'a> {
    wf: &'a str,
    dt: &'a str,
    direction: Direction,
    attr: &'a AttributeSpec,
    scope: &'a str,
}

fn describe_value(emit: &mut Emit, site: &ValueSite<'_>, value: &Literal) -> Iri {
    let attr_iri = attribute_iri(site.wf, site.dt, site.direction, &site.attr.name);
    let node = assign_value_iri(site.scope, &attr_iri, value);
    emit.typed(&node, value_class(site.attr.qualifier, site.direction), ClassId::AttributeValue);
    emit.add(&node, RelationId::Value, value.clone());
    emit.add(&node, RelationId::WasDerivedFrom, attr_iri);
    if let Some(store) = &site.attr.store_ref {
        emit.add(&node, RelationId::AtLocation, store_iri(site.wf, store));
    }
    if site.attr.domain_link.is_some() {
        if let Ok(target) = Iri::new(Namespace::Dom, value.lexical()) {
            emit.add(&node, RelationId::SeeAlso, target);
        }
    }
    node
}

/// Triples for one event. Pure: identical inputs give identical output.
pub fn translate(
    e: &CaptureEvent,
    registry: &SpecRegistry,
    variant: SchemaVariant,
) -> Result<Vec<Triple>, TranslateError> {
    let spec_name = spec_of_workflow_exec(&e.wf);
    let spec = registry.get(spec_name).ok_or_else(|| TranslateError::UnknownSpec(spec_name.to_string()))?;
    let wf_node =
        workflow_exec_iri(&e.wf).ok_or_else(|| TranslateError::Malformed(format!("workflow id {:?}", e.wf)))?;
    let mut emit = Emit { out: Vec::new(), variant };
    let t = Literal::timestamp(e.t);

    match e.kind {
        EventKind::WorkflowBegin => {
            let class = if spec.phase == Phase::Learning {
                ClassId::LearningProcessExecution
            } else {
                ClassId::WorkflowExecution
            };
            emit.typed(&wf_node, class, ClassId::WorkflowExecution);
            emit.add(&wf_node, RelationId::WasInfluencedBy, workflow_iri(&spec.name));
            emit.add(&wf_node, RelationId::StartedAtTime, t);
            if spec.environment.is_some() {
                emit.add(&wf_node, RelationId::AtLocation, environment_iri(&spec.name));
            }
            for (key, value) in &e.values {
                let lit = value.to_literal();
                match key.as_str() {
                    "cluster" => emit.add(&wf_node, RelationId::Host, lit),
                    "nodes" => {
                        for n in lit.lexical().split(',').filter(|n| !n.is_empty()) {
                            emit.add(&wf_node, RelationId::Node, Literal::string(n));
                        }
                    }
                    other => emit.add(&wf_node, RelationId::Tag, Literal::string(format!("{other}={}", lit.lexical()))),
                }
            }
        }
        EventKind::WorkflowEnd => emit.add(&wf_node, RelationId::EndedAtTime, t),
        EventKind::TaskBegin | EventKind::TaskEnd => {
            let dt = spec
                .transformation(&e.dt)
                .ok_or_else(|| TranslateError::UnknownTransformation { spec: spec.name.clone(), dt: e.dt.clone() })?;
            if e.task.is_empty() {
                return Err(TranslateError::Malformed("task event without task id".into()));
            }
            let exec = task_iri(&e.task).ok_or_else(|| TranslateError::Malformed(format!("task id {:?}", e.task)))?;
            let begin = e.kind == EventKind::TaskBegin;
            if begin {
                emit.typed(&exec, execution_class(spec, &dt.name), ClassId::DataTransformationExecution);
                emit.add(&exec, RelationId::WasInfluencedBy, transformation_iri(&spec.name, &dt.name));
                let informer = match &e.parent {
                    Some(parent) => {
                        task_iri(parent).ok_or_else(|| TranslateError::Malformed(format!("parent id {parent:?}")))?
                    }
                    None => wf_node.clone(),
                };
                emit.add(&exec, RelationId::WasInformedBy, informer);
                emit.add(&exec, RelationId::StartedAtTime, t);
                if let (StageQualifier::Stage(_), Some(persona)) = (&dt.stage, &spec.persona) {
                    emit.add(&exec, RelationId::WasAssociatedWith, persona_iri(persona));
                }
            } else {
                emit.add(&exec, RelationId::EndedAtTime, t);
            }

            for (name, value) in &e.values {
                let lit = value.to_literal();
                let declared = if begin { dt.input(name) } else { dt.output(name) };
                let Some(attr) = declared else {
                    warn!(spec = %spec.name, dt = %dt.name, attribute = %name, "attribute not declared; stored untyped");
                    let direction = if begin { Direction::In } else { Direction::Out };
                    let pseudo = attribute_iri(&spec.name, &dt.name, direction, name);
                    let node = assign_value_iri(&e.wf, &pseudo, &lit);
                    emit.add(&node, RelationId::Type, ClassId::AttributeValue.iri());
                    emit.add(&node, RelationId::Value, lit);
                    if begin {
                        emit.add(&exec, RelationId::Used, node);
                    } else {
                        emit.add(&node, RelationId::WasGeneratedBy, exec.clone());
                    }
                    continue;
                };
                let node = if begin {
                    let edge = spec.edge_into(&dt.name, name);
                    let producer = edge.and_then(|edge| {
                        let pwf = edge.from.workflow.as_deref().unwrap_or(&spec.name);
                        let pspec = registry.get(pwf)?;
                        let pattr = pspec.transformation(&edge.from.dt)?.output(&edge.from.attr)?;
                        Some((pspec, &edge.from.dt, pattr))
                    });
                    match producer {
                        Some((pspec, pdt, pattr)) => {
                            let scope = if registry.is_global(&pspec.name, pdt, &pattr.name) {
                                "global"
                            } else {
                                e.wf.as_str()
                            };
                            let site =
                                ValueSite { wf: &pspec.name, dt: pdt, direction: Direction::Out, attr: pattr, scope };
                            describe_value(&mut emit, &site, &lit)
                        }
                        None => {
                            let site = ValueSite {
                                wf: &spec.name,
                                dt: &dt.name,
                                direction: Direction::In,
                                attr,
                                scope: &e.wf,
                            };
                            describe_value(&mut emit, &site, &lit)
                        }
                    }
                } else {
                    let scope = if registry.is_global(&spec.name, &dt.name, name) { "global" } else { e.wf.as_str() };
                    let site = ValueSite { wf: &spec.name, dt: &dt.name, direction: Direction::Out, attr, scope };
                    describe_value(&mut emit, &site, &lit)
                };
                if begin {
                    emit.add(&exec, RelationId::Used, node);
                } else {
                    emit.add(&node, RelationId::WasGeneratedBy, exec.clone());
                }
            }
        }
    }
    Ok(emit.out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::{Value, Values};
    use crate::spec::parse_spec;

    const LEARNING: &str = include_str!("../../fixtures/learning.wfspec");

    fn registry() -> SpecRegistry {
        let mut r = SpecRegistry::new();
        r.insert(parse_spec(LEARNING).unwrap());
        r.insert(parse_spec("workflow g phase=data_curation\n  transformation t\n    in a\n    out b\n").unwrap());
        r
    }

    fn event(
        kind: EventKind,
        wf: &str,
        dt: &str,
        task: &str,
        parent: Option<&str>,
        values: &[(&str, Value)],
    ) -> CaptureEvent {
        CaptureEvent {
            kind,
            wf: wf.into(),
            dt: dt.into(),
            task: task.into(),
            parent: parent.map(Into::into),
            values: values.iter().cloned().map(|(k, v)| (k.to_string(), v)).collect::<Values>(),
            t: 100,
            seq: 1,
        }
    }

    fn has(triples: &[Triple], s: &Iri, p: RelationId, o: impl Into<Term>) -> bool {
        let want = Triple::new(s.clone(), p.iri(), o);
        triples.contains(&want)
    }

    #[test]
    fn generic_begin_and_end() {
        let r = registry();
        let begin = event(EventKind::TaskBegin, "g.01", "t", "aa", None, &[("a", Value::Int(1))]);
        let end = event(EventKind::TaskEnd, "g.01", "t", "aa", None, &[("b", Value::Int(2))]);
        let exec = task_iri("aa").unwrap();
        for variant in SchemaVariant::BOTH {
            let b = translate(&begin, &r, variant).unwrap();
            let e = translate(&end, &r, variant).unwrap();
            assert!(has(&b, &exec, RelationId::Type, ClassId::DataTransformationExecution.iri()));
            assert!(has(&b, &exec, RelationId::WasInfluencedBy, transformation_iri("g", "t")));
            assert_eq!(b.iter().filter(|t| t.predicate == RelationId::Used.iri()).count(), 1);
            assert_eq!(e.iter().filter(|t| t.predicate == RelationId::WasGeneratedBy.iri()).count(), 1);
        }
    }

    #[test]
    fn epoch_end_types_model_and_evaluation() {
        let r = registry();
        let end = event(
            EventKind::TaskEnd,
            "learning.01",
            "epoch",
            "e1",
            Some("tr"),
            &[("model", Value::Str("m1".into())), ("accuracy", Value::Float(0.3))],
        );
        let triples = translate(&end, &r, SchemaVariant::WithProvMl).unwrap();
        let model_attr = attribute_iri("learning", "epoch", Direction::Out, "model");
        let m = assign_value_iri("learning.01", &model_attr, &Literal::string("m1"));
        assert!(has(&triples, &m, RelationId::Type, ClassId::Model.iri()));
        let eval_attr = attribute_iri("learning", "epoch", Direction::Out, "accuracy");
        let ev = assign_value_iri("learning.01", &eval_attr, &Literal::float(0.3));
        assert!(has(&triples, &ev, RelationId::Type, ClassId::ModelEvaluation.iri()));
        assert!(has(&triples, &ev, RelationId::Value, Literal::float(0.3)));
    }

    #[test]
    fn output_hyperparameter_derives_from_setting() {
        let r = registry();
        let end =
            event(EventKind::TaskEnd, "learning.01", "epoch", "e1", None, &[("learning_rate", Value::Float(0.01))]);
        let triples = translate(&end, &r, SchemaVariant::WithProvMl).unwrap();
        let attr = attribute_iri("learning", "epoch", Direction::Out, "learning_rate");
        let v = assign_value_iri("learning.01", &attr, &Literal::float(0.01));
        assert!(has(&triples, &v, RelationId::Type, ClassId::ModelHyperparameterValue.iri()));
        assert!(has(&triples, &v, RelationId::WasDerivedFrom, attr));
    }

    #[test]
    fn section_is_informed_by_parent_and_empty_values_give_node_and_time_only() {
        let r = registry();
        let begin = event(EventKind::TaskBegin, "learning.01", "epoch", "e1", Some("tr"), &[]);
        let triples = translate(&begin, &r, SchemaVariant::WithoutProvMl).unwrap();
        let exec = task_iri("e1").unwrap();
        assert_eq!(triples.len(), 4);
        assert!(has(&triples, &exec, RelationId::WasInformedBy, task_iri("tr").unwrap()));
        let end = event(EventKind::TaskEnd, "learning.01", "epoch", "e1", None, &[]);
        assert_eq!(translate(&end, &r, SchemaVariant::WithProvMl).unwrap().len(), 1);
    }

    #[test]
    fn value_iri_scoping() {
        let attr = attribute_iri("g", "t", Direction::Out, "b");
        let v = Literal::integer(7);
        assert_eq!(assign_value_iri("g.1", &attr, &v), assign_value_iri("g.1", &attr, &v));
        assert_ne!(assign_value_iri("g.1", &attr, &v), assign_value_iri("g.2", &attr, &v));
        assert_ne!(assign_value_iri("g.1", &attr, &v), assign_value_iri("g.1", &attr, &Literal::float(7.0)));
    }

    #[test]
    fn edge_linked_input_reuses_producer_value() {
        let r = registry();
        let produce =
            event(EventKind::TaskEnd, "learning.01", "epoch", "e1", None, &[("model", Value::Str("m1".into()))]);
        let consume =
            event(EventKind::TaskBegin, "learning.01", "validation", "v1", None, &[("model", Value::Str("m1".into()))]);
        let a = translate(&produce, &r, SchemaVariant::WithProvMl).unwrap();
        let b = translate(&consume, &r, SchemaVariant::WithProvMl).unwrap();
        let value_nodes: HashSet<&Iri> =
            a.iter().chain(&b).filter(|t| t.predicate == RelationId::Value.iri()).map(|t| &t.subject).collect();
        assert_eq!(value_nodes.len(), 1);
    }

    #[test]
    fn unknown_dt_and_spec_are_errors() {
        let r = registry();
        let e = event(EventKind::TaskBegin, "learning.01", "ghost", "x", None, &[]);
        assert!(matches!(
            translate(&e, &r, SchemaVariant::WithProvMl),
            Err(TranslateError::UnknownTransformation { .. })
        ));
        let e = event(EventKind::TaskBegin, "nope.01", "t", "x", None, &[]);
        assert!(matches!(translate(&e, &r, SchemaVariant::WithProvMl), Err(TranslateError::UnknownSpec(_))));
    }
}
