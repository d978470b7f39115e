use std::collections::BTreeMap;

use super::{
    is_valid_name, AttributeSpec, DataStoreSpec, DataTransformationSpec, DataflowEdge, EdgeEnd, EnvironmentSpec, Phase,
    Qualifier, SpecError, StageKind, StageQualifier, StoreKind, WorkflowSpec,
};
use crate::model::Iri;

fn err(line: usize, message: impl Into<String>) -> SpecError {
    SpecError::Parse { line, message: message.into() }
}

/// Splits a line into tokens. Double quotes group text (with `\"` and `\\`
/// escapes) and are removed; `#` outside quotes starts a comment.
fn tokenize(text: &str, line: usize) -> Result<Vec<String>, SpecError> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut in_token = false;
    let mut quoted = false;
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if quoted {
            match c {
                '"' => quoted = false,
                '\\' => match chars.next() {
                    Some(e @ ('"' | '\\')) => current.push(e),
                    _ => return Err(err(line, "bad escape in quoted value")),
                },
                c => current.push(c),
            }
            continue;
        }
        match c {
            '#' => break,
            '"' => {
                quoted = true;
                in_token = true;
            }
            c if c.is_whitespace() => {
                if in_token {
                    tokens.push(std::mem::take(&mut current));
                    in_token = false;
                }
            }
            c => {
                current.push(c);
                in_token = true;
            }
        }
    }
    if quoted {
        return Err(err(line, "unterminated quote"));
    }
    if in_token {
        tokens.push(current);
    }
    Ok(tokens)
}

/// `key=value` options following the positional arguments of a declaration.
struct Options {
    line: usize,
    map: BTreeMap<String, String>,
}

impl Options {
    fn parse(tokens: &[String], line: usize) -> Result<Options, SpecError> {
        let mut map = BTreeMap::new();
        for token in tokens {
            let (key, value) =
                token.split_once('=').ok_or_else(|| err(line, format!("expected key=value, got {token:?}")))?;
            if key.is_empty() {
                return Err(err(line, format!("empty key in {token:?}")));
            }
            if map.insert(key.to_string(), value.to_string()).is_some() {
                return Err(err(line, format!("duplicate key {key:?}")));
            }
        }
        Ok(Options { line, map })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn require(&mut self, key: &str) -> Result<String, SpecError> {
        self.take(key).ok_or_else(|| err(self.line, format!("missing {key}=")))
    }

    fn list(&mut self, key: &str) -> Vec<String> {
        self.take(key).map(|v| v.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect()).unwrap_or_default()
    }

    fn finish(self) -> Result<(), SpecError> {
        match self.map.keys().next() {
            Some(key) => Err(err(self.line, format!("unknown key {key:?}"))),
            None => Ok(()),
        }
    }

    fn into_rest(self) -> BTreeMap<String, String> {
        self.map
    }
}

fn name_arg(tokens: &[String], idx: usize, what: &str, line: usize) -> Result<String, SpecError> {
    let name = tokens.get(idx).ok_or_else(|| err(line, format!("missing {what} name")))?;
    if !is_valid_name(name) || name.contains('=') {
        return Err(err(line, format!("invalid {what} name {name:?}")));
    }
    Ok(name.clone())
}

fn parse_edge_end(text: &str, allow_workflow: bool, line: usize) -> Result<EdgeEnd, SpecError> {
    let parts: Vec<&str> = text.split('.').collect();
    let end = match parts.as_slice() {
        [dt, attr] => EdgeEnd { workflow: None, dt: dt.to_string(), attr: attr.to_string() },
        [wf, dt, attr] if allow_workflow => {
            EdgeEnd { workflow: Some(wf.to_string()), dt: dt.to_string(), attr: attr.to_string() }
        }
        _ => return Err(err(line, format!("bad edge endpoint {text:?}"))),
    };
    let names = end.workflow.iter().chain([&end.dt, &end.attr]);
    for name in names {
        if !is_valid_name(name) {
            return Err(err(line, format!("bad edge endpoint {text:?}")));
        }
    }
    Ok(end)
}

/// Parses a `.wfspec` document and resolves its local cross-references.
pub fn parse_spec(text: &str) -> Result<WorkflowSpec, SpecError> {
    let mut spec: Option<WorkflowSpec> = None;
    let mut child_indent: Option<usize> = None;
    let mut current_dt: Option<usize> = None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let tokens = tokenize(raw, line)?;
        if tokens.is_empty() {
            continue;
        }
        let leading = &raw[..raw.len() - raw.trim_start().len()];
        if leading.contains('\t') {
            return Err(err(line, "tabs are not allowed in indentation"));
        }
        let indent = leading.len();
        let keyword = tokens[0].as_str();

        if keyword == "workflow" {
            if spec.is_some() {
                return Err(err(line, "only one workflow per document"));
            }
            if indent != 0 {
                return Err(err(line, "workflow must start at column 0"));
            }
            let name = name_arg(&tokens, 1, "workflow", line)?;
            let mut opts = Options::parse(&tokens[2..], line)?;
            let phase_text = opts.require("phase")?;
            let phase = Phase::parse(&phase_text).ok_or_else(|| err(line, format!("unknown phase {phase_text:?}")))?;
            opts.finish()?;
            spec = Some(WorkflowSpec::new(name, phase));
            continue;
        }

        let spec = spec.as_mut().ok_or_else(|| err(line, "declaration before workflow line"))?;
        if indent == 0 {
            return Err(err(line, format!("{keyword} must be indented under the workflow")));
        }

        if keyword == "in" || keyword == "out" {
            let dt_idx = current_dt.ok_or_else(|| err(line, "attribute outside a transformation"))?;
            if indent <= child_indent.unwrap_or(0) {
                return Err(err(line, "attribute must be indented under its transformation"));
            }
            let name = name_arg(&tokens, 1, "attribute", line)?;
            let mut opts = Options::parse(&tokens[2..], line)?;
            let qualifier = match opts.take("qualifier") {
                Some(q) => Qualifier::parse(&q).ok_or_else(|| err(line, format!("unknown qualifier {q:?}")))?,
                None => Qualifier::Plain,
            };
            let tags = opts.list("tag");
            let store_ref = opts.take("store");
            let domain_link = match opts.take("domain") {
                Some(d) => Some(Iri::parse_prefixed(&d).map_err(|e| err(line, format!("bad domain IRI: {e}")))?),
                None => None,
            };
            opts.finish()?;
            let attr = AttributeSpec { name, qualifier, tags, domain_link, store_ref };
            let dt = &mut spec.transformations[dt_idx];
            if keyword == "in" {
                dt.inputs.push(attr);
            } else {
                dt.outputs.push(attr);
            }
            continue;
        }

        match child_indent {
            None => child_indent = Some(indent),
            Some(expected) if expected != indent => {
                return Err(err(line, format!("inconsistent indentation: expected {expected} spaces")));
            }
            Some(_) => {}
        }
        current_dt = None;

        match keyword {
            "transformation" => {
                let name = name_arg(&tokens, 1, "transformation", line)?;
                let mut opts = Options::parse(&tokens[2..], line)?;
                let stage = match (opts.take("stage"), opts.take("section-of")) {
                    (Some(_), Some(_)) => return Err(err(line, "stage= and section-of= are exclusive")),
                    (Some(kind), None) => StageQualifier::Stage(
                        StageKind::parse(&kind).ok_or_else(|| err(line, format!("unknown stage {kind:?}")))?,
                    ),
                    (None, Some(parent)) => StageQualifier::Section { kind: opts.require("kind")?, parent },
                    (None, None) => StageQualifier::Generic,
                };
                let tags = opts.list("tag");
                opts.finish()?;
                spec.transformations.push(DataTransformationSpec {
                    name,
                    stage,
                    inputs: Vec::new(),
                    outputs: Vec::new(),
                    tags,
                });
                current_dt = Some(spec.transformations.len() - 1);
            }
            "edge" => {
                let (from, arrow, to) = match tokens.as_slice() {
                    [_, from, arrow, to] => (from, arrow, to),
                    _ => return Err(err(line, "expected: edge <dt.attr> -> <dt.attr>")),
                };
                if arrow != "->" {
                    return Err(err(line, "expected '->' in edge"));
                }
                let from = parse_edge_end(from, true, line)?;
                let to = parse_edge_end(to, false, line)?;
                spec.dataflow_edges.push(DataflowEdge { from, to });
            }
            "store" => {
                let name = name_arg(&tokens, 1, "store", line)?;
                let mut opts = Options::parse(&tokens[2..], line)?;
                let kind_text = opts.require("kind")?;
                let kind = StoreKind::parse(&kind_text)
                    .ok_or_else(|| err(line, format!("unknown store kind {kind_text:?}")))?;
                let host = opts.require("host")?;
                spec.stores.push(DataStoreSpec { name, kind, host, metadata: opts.into_rest() });
            }
            "env" => {
                if spec.environment.is_some() {
                    return Err(err(line, "duplicate env declaration"));
                }
                let mut opts = Options::parse(&tokens[1..], line)?;
                let cluster_name = opts.require("cluster")?;
                let node_names = opts.list("nodes");
                let scheduler_job_id = opts.take("job");
                opts.finish()?;
                spec.environment = Some(EnvironmentSpec { cluster_name, node_names, scheduler_job_id });
            }
            "persona" => {
                if spec.persona.is_some() {
                    return Err(err(line, "duplicate persona declaration"));
                }
                let name = name_arg(&tokens, 1, "persona", line)?;
                if tokens.len() > 2 {
                    return Err(err(line, "persona takes a single name"));
                }
                spec.persona = Some(name);
            }
            other => return Err(err(line, format!("unknown declaration {other:?}"))),
        }
    }

    let spec = spec.ok_or_else(|| err(1, "missing workflow declaration"))?;
    resolve(&spec)?;
    Ok(spec)
}

fn resolve(spec: &WorkflowSpec) -> Result<(), SpecError> {
    for dt in &spec.transformations {
        if let StageQualifier::Section { parent, .. } = &dt.stage {
            if spec.transformation(parent).is_none() {
                return Err(SpecError::UnresolvedReference(parent.clone()));
            }
        }
        for attr in dt.inputs.iter().chain(&dt.outputs) {
            if let Some(store) = &attr.store_ref {
                if spec.store(store).is_none() {
                    return Err(SpecError::UnresolvedReference(store.clone()));
                }
            }
        }
    }
    for edge in &spec.dataflow_edges {
        let local_from = edge.from.workflow.as_ref().is_none_or(|wf| *wf == spec.name);
        if local_from && spec.transformation(&edge.from.dt).and_then(|t| t.output(&edge.from.attr)).is_none() {
            return Err(SpecError::UnresolvedReference(format!("{}.{}", edge.from.dt, edge.from.attr)));
        }
        if spec.transformation(&edge.to.dt).and_then(|t| t.input(&edge.to.attr)).is_none() {
            return Err(SpecError::UnresolvedReference(edge.to.to_string()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "workflow w phase=data_curation\n  transformation t\n    in a\n    out b\n";

    #[test]
    fn minimal_document() {
        let spec = parse_spec(MINIMAL).unwrap();
        assert_eq!(spec.transformations.len(), 1);
        assert_eq!(spec.transformations[0].inputs.len(), 1);
        assert_eq!(spec.transformations[0].outputs.len(), 1);
    }

    #[test]
    fn undeclared_edge_endpoint() {
        let text = format!("{MINIMAL}  edge t.b -> ghost.a\n");
        assert_eq!(parse_spec(&text), Err(SpecError::UnresolvedReference("ghost.a".into())));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let text = "workflow w phase=learning\n  transformation t stage=bogus\n";
        assert!(matches!(parse_spec(text), Err(SpecError::Parse { line: 2, .. })));
        let text = "workflow w phase=learning\n  transformation t\n\tin a\n";
        assert!(matches!(parse_spec(text), Err(SpecError::Parse { line: 3, .. })));
        assert!(matches!(parse_spec("  in a\n"), Err(SpecError::Parse { line: 1, .. })));
    }

    #[test]
    fn quoted_values_and_comments() {
        let text = "# header\nworkflow w phase=learning # trailing\n  transformation s stage=training\n  transformation e section-of=s kind=\"Epoch Execution\"\n";
        let spec = parse_spec(text).unwrap();
        assert_eq!(
            spec.transformations[1].stage,
            StageQualifier::Section { kind: "Epoch Execution".into(), parent: "s".into() }
        );
    }

    #[test]
    fn cross_workflow_edges_are_not_resolved_locally() {
        let text = "workflow w phase=learning\n  transformation t\n    in a\n  edge other.dt.x -> t.a\n";
        let spec = parse_spec(text).unwrap();
        assert_eq!(spec.dataflow_edges[0].from.workflow.as_deref(), Some("other"));
    }
}
