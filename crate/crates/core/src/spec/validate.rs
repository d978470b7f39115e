use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::{is_valid_name, Qualifier, StageKind, StageQualifier, WorkflowSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    fn error(message: impl Into<String>) -> Diagnostic {
        Diagnostic { severity: Severity::Error, message: message.into() }
    }

    fn warning(message: impl Into<String>) -> Diagnostic {
        Diagnostic { severity: Severity::Warning, message: message.into() }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{label}: {}", self.message)
    }
}

/// Checks every structural invariant of a specification. Errors block
/// compilation; warnings flag suspicious but legal declarations.
pub fn validate(spec: &WorkflowSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if !is_valid_name(&spec.name) {
        out.push(Diagnostic::error(format!("invalid workflow name {:?}", spec.name)));
    }

    let mut names = BTreeSet::new();
    for dt in &spec.transformations {
        if !is_valid_name(&dt.name) {
            out.push(Diagnostic::error(format!("invalid transformation name {:?}", dt.name)));
        }
        if !names.insert(dt.name.as_str()) {
            out.push(Diagnostic::error(format!("duplicate transformation {}", dt.name)));
        }
    }

    for kind in StageKind::ALL {
        let count = spec.transformations.iter().filter(|t| t.stage == StageQualifier::Stage(kind)).count();
        if count > 1 {
            out.push(Diagnostic::error(format!("duplicate stage {}: {count} transformations", kind.as_str())));
        }
    }

    for dt in &spec.transformations {
        if let StageQualifier::Section { kind, parent } = &dt.stage {
            if kind.is_empty() {
                out.push(Diagnostic::error(format!("section {} has an empty kind label", dt.name)));
            }
            if spec.transformation(parent).is_none() {
                out.push(Diagnostic::error(format!("orphan section {}: parent {parent} is not declared", dt.name)));
            } else if spec.root_stage(&dt.name).is_none() {
                out.push(Diagnostic::error(format!(
                    "orphan section {}: parent chain does not reach a stage transformation",
                    dt.name
                )));
            }
        }
        for (direction, attrs) in [("input", &dt.inputs), ("output", &dt.outputs)] {
            let mut seen = BTreeSet::new();
            for attr in attrs.iter() {
                if !is_valid_name(&attr.name) {
                    out.push(Diagnostic::error(format!("invalid attribute name {:?} on {}", attr.name, dt.name)));
                }
                if !seen.insert(attr.name.as_str()) {
                    out.push(Diagnostic::error(format!("duplicate {direction} {} on {}", attr.name, dt.name)));
                }
                if let Some(store) = &attr.store_ref {
                    if spec.store(store).is_none() {
                        out.push(Diagnostic::error(format!(
                            "{}.{} references undeclared store {store}",
                            dt.name, attr.name
                        )));
                    }
                }
            }
        }
    }

    let mut stores = BTreeSet::new();
    for store in &spec.stores {
        if !is_valid_name(&store.name) {
            out.push(Diagnostic::error(format!("invalid store name {:?}", store.name)));
        }
        if !stores.insert(store.name.as_str()) {
            out.push(Diagnostic::error(format!("duplicate store {}", store.name)));
        }
    }

    if let Some(env) = &spec.environment {
        if env.cluster_name.is_empty() {
            out.push(Diagnostic::error("environment cluster name is empty"));
        }
    }

    for edge in &spec.dataflow_edges {
        let consumer = spec.transformation(&edge.to.dt).and_then(|t| t.input(&edge.to.attr));
        if consumer.is_none() {
            out.push(Diagnostic::error(format!("edge target {} is not a declared input", edge.to)));
        }
        if edge.to.workflow.as_ref().is_some_and(|wf| *wf != spec.name) {
            out.push(Diagnostic::error(format!("edge target {} must be local", edge.to)));
        }
        let local_from = edge.from.workflow.as_ref().is_none_or(|wf| *wf == spec.name);
        if local_from {
            let producer = spec.transformation(&edge.from.dt).and_then(|t| t.output(&edge.from.attr));
            match (producer, consumer) {
                (None, _) => {
                    out.push(Diagnostic::error(format!("edge source {} is not a declared output", edge.from)));
                }
                (Some(p), Some(c)) if p.qualifier != c.qualifier && c.qualifier != Qualifier::Plain => {
                    out.push(Diagnostic::warning(format!(
                        "edge {} -> {} joins qualifiers {} and {}",
                        edge.from,
                        edge.to,
                        p.qualifier.as_str(),
                        c.qualifier.as_str()
                    )));
                }
                _ => {}
            }
        }
    }
    let mut targets = BTreeSet::new();
    for edge in &spec.dataflow_edges {
        if !targets.insert((&edge.to.dt, &edge.to.attr)) {
            out.push(Diagnostic::error(format!("input {} is fed by more than one edge", edge.to)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{parse_spec, DataTransformationSpec};

    #[test]
    fn valid_minimal_spec_is_clean() {
        let spec = parse_spec("workflow w phase=learning\n  transformation t\n    in a\n    out b\n").unwrap();
        assert_eq!(validate(&spec), vec![]);
    }

    #[test]
    fn duplicate_stage() {
        let spec = parse_spec(
            "workflow w phase=learning\n  transformation a stage=training\n  transformation b stage=training\n",
        )
        .unwrap();
        let diags = validate(&spec);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].is_error());
        assert!(diags[0].message.starts_with("duplicate stage"));
    }

    #[test]
    fn orphan_section() {
        let mut spec = WorkflowSpec::new("w", crate::spec::Phase::Learning);
        spec.transformations.push(DataTransformationSpec::new(
            "epoch",
            StageQualifier::Section { kind: "Epoch Execution".into(), parent: "training".into() },
        ));
        let diags = validate(&spec);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.starts_with("orphan section"));
    }

    #[test]
    fn section_under_generic_parent_is_orphan() {
        let spec =
            parse_spec("workflow w phase=learning\n  transformation g\n  transformation s section-of=g kind=Epoch\n")
                .unwrap();
        assert!(validate(&spec)[0].message.starts_with("orphan section"));
    }
}
