//! PROV-ML, PROVLake and W3C PROV vocabulary with the fixed subclass table.

use super::term::{Iri, Namespace, Term};

macro_rules! class_ids {
    ($($ns:ident :: $name:ident),* $(,)?) => {
        /// Every class of the PROV-ML data representation plus the PROVLake
        /// base classes it specializes.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum ClassId {
            $($name),*
        }

        impl ClassId {
            pub const ALL: &'static [ClassId] = &[$(ClassId::$name),*];

            pub fn namespace(self) -> Namespace {
                match self {
                    $(ClassId::$name => Namespace::$ns),*
                }
            }

            pub fn local_name(self) -> &'static str {
                match self {
                    $(ClassId::$name => stringify!($name)),*
                }
            }
        }
    };
}

class_ids! {
    ProvMl::Study,
    ProvMl::LearningExperiment,
    ProvMl::LearningProcessExecution,
    ProvMl::LearningTask,
    ProvMl::LearningTaskValue,
    ProvMl::BaseLearningStage,
    ProvMl::BaseLearningStageExecution,
    ProvMl::Persona,
    ProvMl::LearningStage,
    ProvMl::LearningStageExecution,
    ProvMl::Training,
    ProvMl::Validation,
    ProvMl::Evaluation,
    ProvMl::TrainingExecution,
    ProvMl::ValidationExecution,
    ProvMl::EvaluationExecution,
    ProvMl::LearningStageSection,
    ProvMl::LearningStageSectionExecution,
    ProvMl::TrainingSectionExecution,
    ProvMl::LearningDatasetReference,
    ProvMl::LearningDataset,
    ProvMl::DatasetCharacteristic,
    ProvMl::DatasetCharacteristicValue,
    ProvMl::FeatureExtraction,
    ProvMl::FeatureExtractionExecution,
    ProvMl::FeatureSet,
    ProvMl::FeatureSetData,
    ProvMl::FeatureSetCharacteristic,
    ProvMl::Software,
    ProvMl::Algorithm,
    ProvMl::Implementation,
    ProvMl::ImplementationCharacteristicValue,
    ProvMl::LearningHyperparameter,
    ProvMl::LearningHyperparameterSetting,
    ProvMl::LearningHyperparameterValue,
    ProvMl::ModelSchema,
    ProvMl::ModelProspection,
    ProvMl::Model,
    ProvMl::ModelHyperparameter,
    ProvMl::ModelHyperparameterValue,
    ProvMl::DataStoreInstance,
    ProvMl::EvaluationMeasure,
    ProvMl::ModelEvaluation,
    ProvMl::EvaluationSpecification,
    ProvMl::EvaluationProcedure,
    ProvLake::DataTransformation,
    ProvLake::DataTransformationExecution,
    ProvLake::Attribute,
    ProvLake::AttributeValue,
    ProvLake::Workflow,
    ProvLake::WorkflowExecution,
    ProvLake::DataStore,
    ProvLake::Environment,
}

impl ClassId {
    pub fn iri(self) -> Iri {
        Iri::new(self.namespace(), self.local_name()).expect("class names are valid local names")
    }

    pub fn term(self) -> Term {
        Term::Iri(self.iri())
    }

    /// Declared direct superclasses.
    pub fn parents(self) -> &'static [ClassId] {
        use ClassId::*;
        match self {
            BaseLearningStage | FeatureExtraction => &[DataTransformation],
            LearningStage | LearningStageSection => &[BaseLearningStage],
            Training | Validation | Evaluation => &[LearningStage],
            BaseLearningStageExecution | FeatureExtractionExecution => &[DataTransformationExecution],
            LearningStageExecution | LearningStageSectionExecution => &[BaseLearningStageExecution],
            TrainingExecution | ValidationExecution | EvaluationExecution => &[LearningStageExecution],
            TrainingSectionExecution => &[LearningStageSectionExecution],
            LearningExperiment => &[Workflow],
            LearningProcessExecution => &[WorkflowExecution],
            DataStoreInstance => &[DataStore],
            LearningHyperparameter
            | LearningHyperparameterSetting
            | ModelHyperparameter
            | ModelProspection
            | ModelSchema
            | EvaluationMeasure
            | LearningDatasetReference
            | DatasetCharacteristic
            | FeatureSet
            | FeatureSetCharacteristic => &[Attribute],
            LearningHyperparameterValue
            | ModelHyperparameterValue
            | Model
            | ModelEvaluation
            | LearningDataset
            | DatasetCharacteristicValue
            | FeatureSetData
            | ImplementationCharacteristicValue
            | LearningTaskValue => &[AttributeValue],
            _ => &[],
        }
    }

    /// Reflexive-transitive superclass set, most specific first, each class once.
    pub fn superclasses(self) -> Vec<ClassId> {
        let mut out = vec![self];
        let mut i = 0;
        while i < out.len() {
            for &parent in out[i].parents() {
                if !out.contains(&parent) {
                    out.push(parent);
                }
            }
            i += 1;
        }
        out
    }

    /// Prospective class paired with a retrospective (`*Execution` / `*Value`) class.
    pub fn prospective_counterpart(self) -> Option<ClassId> {
        use ClassId::*;
        Some(match self {
            LearningProcessExecution => LearningExperiment,
            LearningTaskValue => LearningTask,
            BaseLearningStageExecution => BaseLearningStage,
            LearningStageExecution => LearningStage,
            TrainingExecution => Training,
            ValidationExecution => Validation,
            EvaluationExecution => Evaluation,
            LearningStageSectionExecution | TrainingSectionExecution => LearningStageSection,
            LearningDataset => LearningDatasetReference,
            DatasetCharacteristicValue => DatasetCharacteristic,
            FeatureExtractionExecution => FeatureExtraction,
            FeatureSetData => FeatureSet,
            ImplementationCharacteristicValue => Implementation,
            LearningHyperparameterValue => LearningHyperparameterSetting,
            ModelHyperparameterValue => ModelHyperparameter,
            Model => ModelProspection,
            ModelEvaluation => EvaluationMeasure,
            DataTransformationExecution => DataTransformation,
            AttributeValue => Attribute,
            WorkflowExecution => Workflow,
            _ => return None,
        })
    }

    pub fn from_iri(iri: &Iri) -> Option<ClassId> {
        ClassId::ALL.iter().copied().find(|c| c.namespace() == iri.namespace() && c.local_name() == iri.local())
    }
}

pub fn class_iri(class: ClassId) -> Term {
    class.term()
}

/// Reflexive, transitive closure of the declared hierarchy.
pub fn is_subclass(child: ClassId, ancestor: ClassId) -> bool {
    child == ancestor || child.parents().iter().any(|&p| is_subclass(p, ancestor))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelationId {
    Type,
    Label,
    SeeAlso,
    Tag,
    Value,
    WasGeneratedBy,
    Used,
    WasInformedBy,
    WasDerivedFrom,
    WasInfluencedBy,
    WasAssociatedWith,
    HadMember,
    AtLocation,
    StartedAtTime,
    EndedAtTime,
    Host,
    Node,
}

impl RelationId {
    pub const ALL: &'static [RelationId] = &[
        RelationId::Type,
        RelationId::Label,
        RelationId::SeeAlso,
        RelationId::Tag,
        RelationId::Value,
        RelationId::WasGeneratedBy,
        RelationId::Used,
        RelationId::WasInformedBy,
        RelationId::WasDerivedFrom,
        RelationId::WasInfluencedBy,
        RelationId::WasAssociatedWith,
        RelationId::HadMember,
        RelationId::AtLocation,
        RelationId::StartedAtTime,
        RelationId::EndedAtTime,
        RelationId::Host,
        RelationId::Node,
    ];

    fn parts(self) -> (Namespace, &'static str) {
        use RelationId::*;
        match self {
            Type => (Namespace::Rdf, "type"),
            Label => (Namespace::Rdfs, "label"),
            SeeAlso => (Namespace::Rdfs, "seeAlso"),
            Tag => (Namespace::ProvLake, "tag"),
            Host => (Namespace::ProvLake, "host"),
            Node => (Namespace::ProvLake, "node"),
            Value => (Namespace::Prov, "value"),
            WasGeneratedBy => (Namespace::Prov, "wasGeneratedBy"),
            Used => (Namespace::Prov, "used"),
            WasInformedBy => (Namespace::Prov, "wasInformedBy"),
            WasDerivedFrom => (Namespace::Prov, "wasDerivedFrom"),
            WasInfluencedBy => (Namespace::Prov, "wasInfluencedBy"),
            WasAssociatedWith => (Namespace::Prov, "wasAssociatedWith"),
            HadMember => (Namespace::Prov, "hadMember"),
            AtLocation => (Namespace::Prov, "atLocation"),
            StartedAtTime => (Namespace::Prov, "startedAtTime"),
            EndedAtTime => (Namespace::Prov, "endedAtTime"),
        }
    }

    pub fn iri(self) -> Iri {
        let (ns, local) = self.parts();
        Iri::new(ns, local).expect("relation names are valid local names")
    }

    pub fn from_iri(iri: &Iri) -> Option<RelationId> {
        RelationId::ALL.iter().copied().find(|r| {
            let (ns, local) = r.parts();
            ns == iri.namespace() && local == iri.local()
        })
    }
}
