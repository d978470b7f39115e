use std::collections::BTreeSet;

use super::{validate, Qualifier, SpecError, StageQualifier, WorkflowSpec};
use crate::model::{ClassId, Iri, Literal, Namespace, RelationId, SchemaVariant, Term, Triple};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    In,
    Out,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::In => "in",
            Direction::Out => "out",
        }
    }
}

fn exp(local: String) -> Iri {
    Iri::new(Namespace::Exp, local).expect("validated names form valid local names")
}

pub fn workflow_iri(wf: &str) -> Iri {
    exp(format!("wf.{wf}"))
}

pub fn transformation_iri(wf: &str, dt: &str) -> Iri {
    exp(format!("p.{wf}.{dt}"))
}

pub fn attribute_iri(wf: &str, dt: &str, direction: Direction, attr: &str) -> Iri {
    exp(format!("p.{wf}.{dt}.{}.{attr}", direction.as_str()))
}

pub fn store_iri(wf: &str, store: &str) -> Iri {
    exp(format!("s.{wf}.{store}"))
}

pub fn environment_iri(wf: &str) -> Iri {
    exp(format!("e.{wf}"))
}

pub fn persona_iri(name: &str) -> Iri {
    exp(format!("persona.{name}"))
}

/// Prospective class of a transformation, most specific first.
pub(crate) fn transformation_classes(stage: &StageQualifier, variant: SchemaVariant) -> Vec<ClassId> {
    if variant == SchemaVariant::WithoutProvMl {
        return vec![ClassId::DataTransformation];
    }
    match stage {
        StageQualifier::Stage(kind) => match kind {
            super::StageKind::Training => ClassId::Training,
            super::StageKind::Validation => ClassId::Validation,
            super::StageKind::Evaluation => ClassId::Evaluation,
        }
        .superclasses(),
        StageQualifier::Section { .. } => ClassId::LearningStageSection.superclasses(),
        StageQualifier::Generic => vec![ClassId::DataTransformation],
    }
}

pub(crate) fn attribute_class(qualifier: Qualifier) -> ClassId {
    match qualifier {
        Qualifier::Hyperparameter => ClassId::LearningHyperparameterSetting,
        Qualifier::Model => ClassId::ModelProspection,
        Qualifier::ModelEvaluation => ClassId::EvaluationMeasure,
        Qualifier::DatasetReference => ClassId::LearningDatasetReference,
        Qualifier::FeatureSet => ClassId::FeatureSet,
        Qualifier::Plain => ClassId::Attribute,
    }
}

struct Out(BTreeSet<Triple>);

impl Out {
    fn add(&mut self, s: &Iri, p: RelationId, o: impl Into<Term>) {
        self.0.insert(Triple::new(s.clone(), p.iri(), o));
    }

    fn types(&mut self, s: &Iri, classes: &[ClassId]) {
        for class in classes {
            self.add(s, RelationId::Type, class.iri());
        }
    }

    fn tags<'a>(&mut self, s: &Iri, tags: impl IntoIterator<Item = &'a str>) {
        for tag in tags {
            self.add(s, RelationId::Tag, Literal::string(tag));
        }
    }
}

/// Prospective triples of a valid specification in the requested encoding.
/// Qualifier and stage tags are written in both encodings, so a graph built
/// with PROV-ML classes also answers the generic query shapes.
pub fn compile_prospective(spec: &WorkflowSpec, variant: SchemaVariant) -> Result<BTreeSet<Triple>, SpecError> {
    let errors: Vec<_> = validate(spec).into_iter().filter(|d| d.is_error()).collect();
    if !errors.is_empty() {
        return Err(SpecError::Invalid(errors));
    }
    let with = variant == SchemaVariant::WithProvMl;
    let wf = spec.name.as_str();
    let mut out = Out(BTreeSet::new());

    let wf_node = workflow_iri(wf);
    out.types(&wf_node, &[ClassId::Workflow]);
    if with && spec.phase == super::Phase::Learning {
        out.types(&wf_node, &[ClassId::LearningExperiment]);
    }
    out.add(&wf_node, RelationId::Label, Literal::string(wf));
    out.tags(&wf_node, [spec.phase.as_str()]);

    let persona = spec.persona.as_deref().map(|name| {
        let node = persona_iri(name);
        if with {
            out.types(&node, &[ClassId::Persona]);
        } else {
            out.tags(&node, ["Persona"]);
        }
        out.add(&node, RelationId::Label, Literal::string(name));
        node
    });

    if let Some(env) = &spec.environment {
        let node = environment_iri(wf);
        out.types(&node, &[ClassId::Environment]);
        out.add(&node, RelationId::Host, Literal::string(env.cluster_name.as_str()));
        for n in &env.node_names {
            out.add(&node, RelationId::Node, Literal::string(n.as_str()));
        }
        if let Some(job) = &env.scheduler_job_id {
            out.add(&node, RelationId::Tag, Literal::string(format!("job={job}")));
        }
        out.add(&wf_node, RelationId::AtLocation, node);
    }

    for store in &spec.stores {
        let node = store_iri(wf, &store.name);
        if with {
            out.types(&node, &ClassId::DataStoreInstance.superclasses());
        } else {
            out.types(&node, &[ClassId::DataStore]);
        }
        out.add(&node, RelationId::Label, Literal::string(store.name.as_str()));
        out.add(&node, RelationId::Host, Literal::string(store.host.as_str()));
        out.tags(&node, [store.kind.as_str()]);
        for (k, v) in &store.metadata {
            out.add(&node, RelationId::Tag, Literal::string(format!("{k}={v}")));
        }
    }

    for dt in &spec.transformations {
        let node = transformation_iri(wf, &dt.name);
        out.types(&node, &transformation_classes(&dt.stage, variant));
        let label = match &dt.stage {
            StageQualifier::Section { kind, .. } => kind.as_str(),
            _ => dt.name.as_str(),
        };
        out.add(&node, RelationId::Label, Literal::string(label));
        out.tags(&node, dt.tags.iter().map(String::as_str));
        if let StageQualifier::Stage(kind) = dt.stage {
            out.tags(&node, [kind.tag()]);
            if let Some(persona) = &persona {
                out.add(&node, RelationId::WasAssociatedWith, persona.clone());
            }
        }

        for (direction, attrs) in [(Direction::In, &dt.inputs), (Direction::Out, &dt.outputs)] {
            for attr in attrs.iter() {
                let a = attribute_iri(wf, &dt.name, direction, &attr.name);
                if with {
                    out.types(&a, &attribute_class(attr.qualifier).superclasses());
                } else {
                    out.types(&a, &[ClassId::Attribute]);
                }
                out.add(&a, RelationId::Label, Literal::string(attr.name.as_str()));
                out.tags(&a, attr.qualifier.tag());
                out.tags(&a, attr.tags.iter().map(String::as_str));
                out.add(&node, RelationId::HadMember, a.clone());
                if let Some(store) = &attr.store_ref {
                    out.add(&a, RelationId::AtLocation, store_iri(wf, store));
                }
                if let Some(domain) = &attr.domain_link {
                    out.add(&a, RelationId::SeeAlso, domain.clone());
                }
            }
        }
    }

    for edge in &spec.dataflow_edges {
        let producer_wf = edge.from.workflow.as_deref().unwrap_or(wf);
        let producer = attribute_iri(producer_wf, &edge.from.dt, Direction::Out, &edge.from.attr);
        let consumer = attribute_iri(wf, &edge.to.dt, Direction::In, &edge.to.attr);
        out.add(&consumer, RelationId::WasDerivedFrom, producer);
    }
    Ok(out.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::parse_spec;

    fn workflow_node_triples(spec: &WorkflowSpec, variant: SchemaVariant) -> BTreeSet<Triple> {
        let mut empty = spec.clone();
        empty.transformations.clear();
        empty.dataflow_edges.clear();
        compile_prospective(&empty, variant).unwrap()
    }

    #[test]
    fn generic_transformation_with_plain_output_adds_five_triples() {
        let spec = parse_spec("workflow w phase=data_curation\n  transformation t\n    out b\n").unwrap();
        for variant in SchemaVariant::BOTH {
            let all = compile_prospective(&spec, variant).unwrap();
            let base = workflow_node_triples(&spec, variant);
            let added: Vec<_> = all.difference(&base).collect();
            let dt = transformation_iri("w", "t");
            let attr = attribute_iri("w", "t", Direction::Out, "b");
            let expected: BTreeSet<Triple> = [
                Triple::new(dt.clone(), RelationId::Type.iri(), ClassId::DataTransformation.iri()),
                Triple::new(dt.clone(), RelationId::Label.iri(), Literal::string("t")),
                Triple::new(attr.clone(), RelationId::Type.iri(), ClassId::Attribute.iri()),
                Triple::new(attr.clone(), RelationId::Label.iri(), Literal::string("b")),
                Triple::new(dt, RelationId::HadMember.iri(), attr),
            ]
            .into();
            assert_eq!(added.len(), 5);
            assert_eq!(added.into_iter().cloned().collect::<BTreeSet<_>>(), expected);
        }
    }

    #[test]
    fn empty_workflow_has_only_workflow_node_triples() {
        let spec = parse_spec("workflow w phase=learning\n").unwrap();
        let triples = compile_prospective(&spec, SchemaVariant::WithProvMl).unwrap();
        let wf = workflow_iri("w");
        assert!(triples.iter().all(|t| t.subject == wf));
    }

    #[test]
    fn hyperparameter_attribute_is_typed_as_setting() {
        let spec = parse_spec(
            "workflow w phase=learning\n  transformation t stage=training\n    in lr qualifier=hyperparameter\n",
        )
        .unwrap();
        let triples = compile_prospective(&spec, SchemaVariant::WithProvMl).unwrap();
        let attr = attribute_iri("w", "t", Direction::In, "lr");
        assert!(triples.contains(&Triple::new(
            attr,
            RelationId::Type.iri(),
            ClassId::LearningHyperparameterSetting.iri()
        )));
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let spec = parse_spec(
            "workflow w phase=learning\n  transformation a stage=training\n  transformation b stage=training\n",
        )
        .unwrap();
        assert!(matches!(compile_prospective(&spec, SchemaVariant::WithProvMl), Err(SpecError::Invalid(_))));
    }
}
