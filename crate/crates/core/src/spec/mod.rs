//! Prospective provenance: `.wfspec` workflow specifications, their
//! validation and compilation to triples.

mod compile;
mod parse;
mod render;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Iri;

pub use compile::{
    attribute_iri, compile_prospective, environment_iri, persona_iri, store_iri, transformation_iri, workflow_iri,
    Direction,
};
pub use parse::parse_spec;
pub use render::render_spec;
pub use validate::{validate, Diagnostic, Severity};

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unresolved reference {0:?}")]
    UnresolvedReference(String),
    #[error("specification has {} error(s): {}", .0.len(), .0.iter().map(|d| d.message.as_str()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    DataCuration,
    DataPreparation,
    Learning,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::DataCuration => "data_curation",
            Phase::DataPreparation => "data_preparation",
            Phase::Learning => "learning",
        }
    }

    pub fn parse(text: &str) -> Option<Phase> {
        [Phase::DataCuration, Phase::DataPreparation, Phase::Learning].into_iter().find(|p| p.as_str() == text)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Training,
    Validation,
    Evaluation,
}

impl StageKind {
    pub const ALL: [StageKind; 3] = [StageKind::Training, StageKind::Validation, StageKind::Evaluation];

    pub fn as_str(self) -> &'static str {
        match self {
            StageKind::Training => "training",
            StageKind::Validation => "validation",
            StageKind::Evaluation => "evaluation",
        }
    }

    /// Tag literal used by the generic encoding.
    pub fn tag(self) -> &'static str {
        match self {
            StageKind::Training => "Training",
            StageKind::Validation => "Validation",
            StageKind::Evaluation => "Evaluation",
        }
    }

    pub fn parse(text: &str) -> Option<StageKind> {
        StageKind::ALL.into_iter().find(|k| k.as_str() == text)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum StageQualifier {
    Stage(StageKind),
    Section { kind: String, parent: String },
    Generic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Qualifier {
    Hyperparameter,
    Model,
    ModelEvaluation,
    DatasetReference,
    FeatureSet,
    Plain,
}

impl Qualifier {
    pub const ALL: [Qualifier; 6] = [
        Qualifier::Hyperparameter,
        Qualifier::Model,
        Qualifier::ModelEvaluation,
        Qualifier::DatasetReference,
        Qualifier::FeatureSet,
        Qualifier::Plain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Qualifier::Hyperparameter => "hyperparameter",
            Qualifier::Model => "model",
            Qualifier::ModelEvaluation => "model_evaluation",
            Qualifier::DatasetReference => "dataset_reference",
            Qualifier::FeatureSet => "feature_set",
            Qualifier::Plain => "plain",
        }
    }

    /// Tag literal used by the generic encoding; plain attributes carry none.
    pub fn tag(self) -> Option<&'static str> {
        match self {
            Qualifier::Hyperparameter => Some("Hyperparameter"),
            Qualifier::Model => Some("Model"),
            Qualifier::ModelEvaluation => Some("Model Evaluation"),
            Qualifier::DatasetReference => Some("Dataset Reference"),
            Qualifier::FeatureSet => Some("Feature Set"),
            Qualifier::Plain => None,
        }
    }

    pub fn parse(text: &str) -> Option<Qualifier> {
        Qualifier::ALL.into_iter().find(|q| q.as_str() == text)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttributeSpec {
    pub name: String,
    pub qualifier: Qualifier,
    pub tags: Vec<String>,
    pub domain_link: Option<Iri>,
    pub store_ref: Option<String>,
}

impl AttributeSpec {
    pub fn new(name: impl Into<String>, qualifier: Qualifier) -> AttributeSpec {
        AttributeSpec { name: name.into(), qualifier, tags: Vec::new(), domain_link: None, store_ref: None }
    }

    pub fn with_store(mut self, store: impl Into<String>) -> AttributeSpec {
        self.store_ref = Some(store.into());
        self
    }

    pub fn with_domain(mut self, iri: Iri) -> AttributeSpec {
        self.domain_link = Some(iri);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataTransformationSpec {
    pub name: String,
    pub stage: StageQualifier,
    pub inputs: Vec<AttributeSpec>,
    pub outputs: Vec<AttributeSpec>,
    pub tags: Vec<String>,
}

impl DataTransformationSpec {
    pub fn new(name: impl Into<String>, stage: StageQualifier) -> DataTransformationSpec {
        DataTransformationSpec { name: name.into(), stage, inputs: Vec::new(), outputs: Vec::new(), tags: Vec::new() }
    }

    pub fn input(&self, name: &str) -> Option<&AttributeSpec> {
        self.inputs.iter().find(|a| a.name == name)
    }

    pub fn output(&self, name: &str) -> Option<&AttributeSpec> {
        self.outputs.iter().find(|a| a.name == name)
    }
}

/// One end of a dataflow edge. `workflow` is set when the end lives in
/// another specification file.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeEnd {
    pub workflow: Option<String>,
    pub dt: String,
    pub attr: String,
}

impl fmt::Display for EdgeEnd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(wf) = &self.workflow {
            write!(f, "{wf}.")?;
        }
        write!(f, "{}.{}", self.dt, self.attr)
    }
}

/// Producer output feeding a consumer input. The consumer is always local.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DataflowEdge {
    pub from: EdgeEnd,
    pub to: EdgeEnd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StoreKind {
    FileSystem,
    ObjectStore,
    DocumentDbms,
    TripleStore,
}

impl StoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StoreKind::FileSystem => "file_system",
            StoreKind::ObjectStore => "object_store",
            StoreKind::DocumentDbms => "document_dbms",
            StoreKind::TripleStore => "triple_store",
        }
    }

    pub fn parse(text: &str) -> Option<StoreKind> {
        [StoreKind::FileSystem, StoreKind::ObjectStore, StoreKind::DocumentDbms, StoreKind::TripleStore]
            .into_iter()
            .find(|k| k.as_str() == text)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataStoreSpec {
    pub name: String,
    pub kind: StoreKind,
    pub host: String,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnvironmentSpec {
    pub cluster_name: String,
    pub node_names: Vec<String>,
    pub scheduler_job_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkflowSpec {
    pub name: String,
    pub phase: Phase,
    pub transformations: Vec<DataTransformationSpec>,
    pub dataflow_edges: Vec<DataflowEdge>,
    pub stores: Vec<DataStoreSpec>,
    pub environment: Option<EnvironmentSpec>,
    pub persona: Option<String>,
}

impl WorkflowSpec {
    pub fn new(name: impl Into<String>, phase: Phase) -> WorkflowSpec {
        WorkflowSpec {
            name: name.into(),
            phase,
            transformations: Vec::new(),
            dataflow_edges: Vec::new(),
            stores: Vec::new(),
            environment: None,
            persona: None,
        }
    }

    pub fn transformation(&self, name: &str) -> Option<&DataTransformationSpec> {
        self.transformations.iter().find(|t| t.name == name)
    }

    pub fn store(&self, name: &str) -> Option<&DataStoreSpec> {
        self.stores.iter().find(|s| s.name == name)
    }

    /// The stage a transformation belongs to, following section parents.
    /// `None` for generic transformations and broken section chains.
    pub fn root_stage(&self, dt: &str) -> Option<StageKind> {
        let mut current = self.transformation(dt)?;
        for _ in 0..=self.transformations.len() {
            match &current.stage {
                StageQualifier::Stage(kind) => return Some(*kind),
                StageQualifier::Generic => return None,
                StageQualifier::Section { parent, .. } => current = self.transformation(parent)?,
            }
        }
        None
    }

    /// The edge feeding a local input, if one is declared.
    pub fn edge_into(&self, dt: &str, attr: &str) -> Option<&DataflowEdge> {
        self.dataflow_edges.iter().find(|e| e.to.dt == dt && e.to.attr == attr)
    }
}

/// Names of workflows, transformations, attributes and stores.
pub(crate) fn is_valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::model::{Namespace, SchemaVariant};

    const LEARNING: &str = include_str!("../../fixtures/learning.wfspec");

    #[test]
    fn bundled_learning_fixture() {
        let spec = parse_spec(LEARNING).unwrap();
        assert_eq!(spec.transformations.len(), 5);
        assert_eq!(validate(&spec), vec![]);
        let hyper: usize = spec
            .transformations
            .iter()
            .flat_map(|t| t.inputs.iter().chain(&t.outputs))
            .filter(|a| a.qualifier == Qualifier::Hyperparameter)
            .count();
        assert_eq!(hyper, 4);
        assert_eq!(spec.root_stage("batch"), Some(StageKind::Training));
    }

    fn name() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9_]{0,6}"
    }

    fn text_value() -> impl Strategy<Value = String> {
        "[A-Za-z0-9 _/#\"\\\\.-]{0,10}"
    }

    fn attribute(stores: Vec<String>) -> impl Strategy<Value = AttributeSpec> {
        let store = if stores.is_empty() {
            Just(None).boxed()
        } else {
            proptest::option::of(proptest::sample::select(stores)).boxed()
        };
        (
            name(),
            proptest::sample::select(Qualifier::ALL.to_vec()),
            proptest::collection::vec("[A-Za-z][A-Za-z0-9 ]{0,5}", 0..3),
            proptest::option::of(name()),
            store,
        )
            .prop_map(|(name, qualifier, tags, domain, store_ref)| AttributeSpec {
                name,
                qualifier,
                tags,
                domain_link: domain.map(|d| Iri::new(Namespace::Dom, d).unwrap()),
                store_ref,
            })
    }

    fn unique_by_name(mut attrs: Vec<AttributeSpec>) -> Vec<AttributeSpec> {
        let mut seen = std::collections::BTreeSet::new();
        attrs.retain(|a| seen.insert(a.name.clone()));
        attrs
    }

    prop_compose! {
        fn workflow_spec()(
            wf in name(),
            phase in proptest::sample::select(vec![Phase::DataCuration, Phase::DataPreparation, Phase::Learning]),
            store_names in proptest::collection::btree_set(name(), 0..3),
            host in text_value(),
            meta in proptest::collection::btree_map("[a-z]{1,4}", text_value(), 0..3),
            env in proptest::option::of((text_value().prop_filter("non-empty", |s| !s.is_empty()),
                proptest::collection::vec(name(), 0..3), proptest::option::of(name()))),
            persona in proptest::option::of(name()),
            n_dt in 0usize..4,
        )(
            attrs in proptest::collection::vec(
                (proptest::collection::vec(attribute(store_names.iter().cloned().collect()), 0..3),
                 proptest::collection::vec(attribute(store_names.iter().cloned().collect()), 0..3),
                 proptest::collection::vec("[A-Za-z][A-Za-z0-9 ]{0,5}", 0..2)),
                n_dt),
            wf in Just(wf), phase in Just(phase), store_names in Just(store_names), host in Just(host),
            meta in Just(meta), env in Just(env), persona in Just(persona),
        ) -> WorkflowSpec {
            let mut spec = WorkflowSpec::new(wf, phase);
            spec.persona = persona;
            spec.stores = store_names.into_iter().map(|name| DataStoreSpec {
                name, kind: StoreKind::ObjectStore, host: host.clone(), metadata: meta.clone(),
            }).collect();
            spec.environment = env.map(|(cluster_name, node_names, scheduler_job_id)| EnvironmentSpec {
                cluster_name, node_names, scheduler_job_id,
            });
            for (i, (inputs, outputs, tags)) in attrs.into_iter().enumerate() {
                let stage = match i {
                    0 => StageQualifier::Stage(StageKind::Training),
                    1 => StageQualifier::Section { kind: "Epoch Execution".into(), parent: "dt0".into() },
                    2 => StageQualifier::Stage(StageKind::Evaluation),
                    _ => StageQualifier::Generic,
                };
                spec.transformations.push(DataTransformationSpec {
                    name: format!("dt{i}"), stage, inputs: unique_by_name(inputs), outputs: unique_by_name(outputs), tags,
                });
            }
            if spec.transformations.len() >= 3 {
                if let (Some(o), Some(i)) = (spec.transformations[1].outputs.first(), spec.transformations[2].inputs.first()) {
                    spec.dataflow_edges.push(DataflowEdge {
                        from: EdgeEnd { workflow: None, dt: "dt1".into(), attr: o.name.clone() },
                        to: EdgeEnd { workflow: None, dt: "dt2".into(), attr: i.name.clone() },
                    });
                }
            }
            if let Some(i) = spec.transformations.first().and_then(|t| t.inputs.first()) {
                if spec.edge_into("dt0", &i.name).is_none() {
                    spec.dataflow_edges.push(DataflowEdge {
                        from: EdgeEnd { workflow: Some("upstream".into()), dt: "x".into(), attr: "y".into() },
                        to: EdgeEnd { workflow: None, dt: "dt0".into(), attr: i.name.clone() },
                    });
                }
            }
            spec
        }
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(spec in workflow_spec()) {
            let text = render_spec(&spec);
            let parsed = parse_spec(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
            prop_assert_eq!(parsed, spec);
        }

        #[test]
        fn compile_is_deterministic_and_covers_every_attribute(spec in workflow_spec()) {
            prop_assume!(validate(&spec).iter().all(|d| !d.is_error()));
            for variant in SchemaVariant::BOTH {
                let a = compile_prospective(&spec, variant).unwrap();
                let b = compile_prospective(&spec.clone(), variant).unwrap();
                prop_assert_eq!(&a, &b);
                let label = crate::model::RelationId::Label.iri();
                for dt in &spec.transformations {
                    for (dir, attrs) in [(Direction::In, &dt.inputs), (Direction::Out, &dt.outputs)] {
                        for attr in attrs {
                            let node = attribute_iri(&spec.name, &dt.name, dir, &attr.name);
                            let labels = a.iter().filter(|t| t.subject == node && t.predicate == label).count();
                            prop_assert_eq!(labels, 1);
                        }
                    }
                }
            }
        }
    }
}
