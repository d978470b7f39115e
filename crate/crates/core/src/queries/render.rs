use std::fmt::Write;
use std::str::FromStr;

use super::ast::QueryAst;
use super::QueryError;
use crate::model::{Datatype, Term};
use crate::store::Table;

/// SPARQL-like text of an AST, one commented block per part. For reading
/// only; nothing parses it back.
pub fn render(ast: &QueryAst) -> String {
    let mut out = String::new();
    render_into(ast, &mut out);
    out
}

fn render_into(ast: &QueryAst, out: &mut String) {
    let mut select: Vec<String> = Vec::new();
    for p in &ast.projection {
        match ast.aggregates.iter().find(|a| &a.alias == p) {
            Some(a) => select.push(format!("({}(?{}) AS ?{})", a.func.name(), a.var, a.alias)),
            None => select.push(format!("?{p}")),
        }
    }
    let _ = writeln!(out, "# {} ({})", ast.query, ast.variant.label());
    let _ = writeln!(out, "SELECT {}", select.join(" "));
    out.push_str("WHERE {\n");
    for part in &ast.parts {
        let _ = writeln!(out, "  # {}", part.name);
        for t in &part.patterns {
            let _ = writeln!(out, "  {t}");
        }
    }
    for f in &ast.filters {
        let _ = writeln!(out, "  FILTER({} {} {})", f.left, f.op.symbol(), f.right);
    }
    for b in &ast.binds {
        let _ = writeln!(out, "  BIND(?{} - ?{} AS ?{})", b.minuend, b.subtrahend, b.alias);
    }
    out.push_str("}\n");
    if !ast.group_by.is_empty() {
        let keys: Vec<String> = ast.group_by.iter().map(|g| format!("?{g}")).collect();
        let _ = writeln!(out, "GROUP BY {}", keys.join(" "));
    }
    if !ast.order_by.is_empty() {
        let keys: Vec<String> = ast
            .order_by
            .iter()
            .map(|o| format!("{}(?{})", if o.descending { "DESC" } else { "ASC" }, o.column))
            .collect();
        let _ = writeln!(out, "ORDER BY {}", keys.join(" "));
    }
    if let Some(n) = ast.limit {
        let _ = writeln!(out, "LIMIT {n}");
    }
    if let Some((seed, next)) = &ast.then {
        let vars: Vec<String> = seed.iter().map(|s| format!("?{s}")).collect();
        let _ = writeln!(out, "# then, with {} from the first row:", vars.join(" "));
        render_into(next, out);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Table,
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(OutputFormat::Table),
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(QueryError::UnknownFormat(other.to_string())),
        }
    }
}

fn json_value(t: &Term) -> serde_json::Value {
    let Some(lit) = t.as_literal() else { return serde_json::Value::String(t.value_string()) };
    match lit.datatype() {
        Datatype::Integer | Datatype::TimestampMicros => lit.as_i64().map_or(serde_json::Value::Null, Into::into),
        Datatype::Float => lit.as_f64().map_or(serde_json::Value::Null, Into::into),
        Datatype::Boolean => serde_json::Value::Bool(lit.lexical() == "true"),
        Datatype::String => serde_json::Value::String(lit.lexical().to_string()),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn format_table(table: &Table, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            let rows: Vec<serde_json::Map<String, serde_json::Value>> = table
                .rows
                .iter()
                .map(|row| table.columns.iter().cloned().zip(row.iter().map(json_value)).collect())
                .collect();
            serde_json::to_string_pretty(&serde_json::json!({ "columns": table.columns, "rows": rows }))
                .expect("plain JSON values serialize")
        }
        OutputFormat::Csv => {
            let mut out = String::new();
            let header: Vec<String> = table.columns.iter().map(|c| csv_field(c)).collect();
            let _ = writeln!(out, "{}", header.join(","));
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(|t| csv_field(&t.value_string())).collect();
                let _ = writeln!(out, "{}", cells.join(","));
            }
            out
        }
        OutputFormat::Table => {
            let cells: Vec<Vec<String>> =
                table.rows.iter().map(|r| r.iter().map(Term::value_string).collect()).collect();
            let widths: Vec<usize> = table
                .columns
                .iter()
                .enumerate()
                .map(|(i, c)| cells.iter().map(|r| r[i].chars().count()).chain([c.len()]).max().unwrap_or(0))
                .collect();
            let line = |vals: &[String]| {
                let padded: Vec<String> = vals.iter().zip(&widths).map(|(v, w)| format!("{v:<w$}")).collect();
                padded.join(" | ").trim_end().to_string()
            };
            let mut out = String::new();
            let _ = writeln!(out, "{}", line(&table.columns));
            let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
            for r in &cells {
                let _ = writeln!(out, "{}", line(r));
            }
            let _ = writeln!(out, "({} rows)", table.len());
            out
        }
    }
}
