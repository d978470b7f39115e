use std::fmt::Write;

use super::{AttributeSpec, Qualifier, StageQualifier, WorkflowSpec};

fn value(text: &str) -> String {
    let plain = !text.is_empty() && !text.chars().any(|c| c.is_whitespace() || matches!(c, '"' | '#' | '\\'));
    if plain {
        return text.to_string();
    }
    let mut out = String::from("\"");
    for c in text.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn push_tags(line: &mut String, tags: &[String]) {
    if !tags.is_empty() {
        let _ = write!(line, " tag={}", value(&tags.join(",")));
    }
}

fn attribute_line(direction: &str, attr: &AttributeSpec) -> String {
    let mut line = format!("    {direction} {}", attr.name);
    if attr.qualifier != Qualifier::Plain {
        let _ = write!(line, " qualifier={}", attr.qualifier.as_str());
    }
    push_tags(&mut line, &attr.tags);
    if let Some(store) = &attr.store_ref {
        let _ = write!(line, " store={store}");
    }
    if let Some(domain) = &attr.domain_link {
        let _ = write!(line, " domain={}", value(&domain.to_string()));
    }
    line
}

/// Canonical `.wfspec` text; `parse_spec` reads it back to an equal value.
pub fn render_spec(spec: &WorkflowSpec) -> String {
    let mut out = format!("workflow {} phase={}\n", spec.name, spec.phase.as_str());
    if let Some(persona) = &spec.persona {
        let _ = writeln!(out, "  persona {persona}");
    }
    for store in &spec.stores {
        let _ = write!(out, "  store {} kind={} host={}", store.name, store.kind.as_str(), value(&store.host));
        for (k, v) in &store.metadata {
            let _ = write!(out, " {k}={}", value(v));
        }
        out.push('\n');
    }
    if let Some(env) = &spec.environment {
        let _ = write!(out, "  env cluster={}", value(&env.cluster_name));
        if !env.node_names.is_empty() {
            let _ = write!(out, " nodes={}", value(&env.node_names.join(",")));
        }
        if let Some(job) = &env.scheduler_job_id {
            let _ = write!(out, " job={}", value(job));
        }
        out.push('\n');
    }
    for dt in &spec.transformations {
        let mut line = format!("  transformation {}", dt.name);
        match &dt.stage {
            StageQualifier::Stage(kind) => {
                let _ = write!(line, " stage={}", kind.as_str());
            }
            StageQualifier::Section { kind, parent } => {
                let _ = write!(line, " section-of={parent} kind={}", value(kind));
            }
            StageQualifier::Generic => {}
        }
        push_tags(&mut line, &dt.tags);
        let _ = writeln!(out, "{line}");
        for attr in &dt.inputs {
            let _ = writeln!(out, "{}", attribute_line("in", attr));
        }
        for attr in &dt.outputs {
            let _ = writeln!(out, "{}", attribute_line("out", attr));
        }
    }
    for edge in &spec.dataflow_edges {
        let _ = writeln!(out, "  edge {} -> {}", edge.from, edge.to);
    }
    out
}
