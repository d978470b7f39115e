//! Line-oriented graph dump: `<s> <p> <o> .` with full IRIs, typed literals
//! and the prefix table in a leading comment block.

use std::io::{self, BufRead, Write};

use super::term::{Datatype, Iri, Literal, Namespace, Term, Triple};
use super::ModelError;

pub fn write_header<W: Write>(out: &mut W) -> io::Result<()> {
    writeln!(out, "# prefixes")?;
    for ns in Namespace::ALL {
        writeln!(out, "# @prefix {}: <{}> .", ns.prefix(), ns.base())?;
    }
    Ok(())
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

pub fn format_term(term: &Term) -> String {
    match term {
        Term::Iri(iri) => format!("<{}>", iri.full()),
        Term::Literal(lit) => format!("\"{}\"^^<{}>", escape(lit.lexical()), lit.datatype().iri()),
    }
}

pub fn format_triple(t: &Triple) -> String {
    format!("<{}> <{}> {} .", t.subject.full(), t.predicate.full(), format_term(&t.object))
}

/// Writes header plus lines sorted lexicographically, so equal graphs give
/// byte-identical dumps.
pub fn write_sorted<'a, W: Write>(out: &mut W, triples: impl IntoIterator<Item = &'a Triple>) -> io::Result<usize> {
    let mut lines: Vec<String> = triples.into_iter().map(format_triple).collect();
    lines.sort_unstable();
    lines.dedup();
    write_header(out)?;
    for line in &lines {
        writeln!(out, "{line}")?;
    }
    Ok(lines.len())
}

fn parse_iri_token(token: &str, line: usize) -> Result<Iri, ModelError> {
    let inner = token
        .strip_prefix('<')
        .and_then(|t| t.strip_suffix('>'))
        .ok_or_else(|| ModelError::Syntax { line, message: format!("expected <iri>, got {token}") })?;
    let (ns, local) = Namespace::split_full(inner)
        .ok_or_else(|| ModelError::Syntax { line, message: format!("IRI outside known namespaces: {inner}") })?;
    Iri::new(ns, local)
}

fn unescape(text: &str, line: usize) -> Result<String, ModelError> {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('"') => out.push('"'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('t') => out.push('\t'),
            other => {
                return Err(ModelError::Syntax { line, message: format!("bad escape \\{other:?}") });
            }
        }
    }
    Ok(out)
}

/// Parses one data line. Returns `Ok(None)` for blank and comment lines.
pub fn parse_line(text: &str, line: usize) -> Result<Option<Triple>, ModelError> {
    let text = text.trim();
    if text.is_empty() || text.starts_with('#') {
        return Ok(None);
    }
    let body = text
        .strip_suffix('.')
        .map(str::trim_end)
        .ok_or_else(|| ModelError::Syntax { line, message: "missing terminating '.'".into() })?;
    let (s, rest) =
        body.split_once(' ').ok_or_else(|| ModelError::Syntax { line, message: "missing predicate".into() })?;
    let (p, o) = rest
        .trim_start()
        .split_once(' ')
        .ok_or_else(|| ModelError::Syntax { line, message: "missing object".into() })?;
    let subject = parse_iri_token(s, line)?;
    let predicate = parse_iri_token(p, line)?;
    let o = o.trim();
    let object = if o.starts_with('<') {
        Term::Iri(parse_iri_token(o, line)?)
    } else {
        let (quoted, dt) =
            o.rsplit_once("^^").ok_or_else(|| ModelError::Syntax { line, message: format!("untyped literal {o}") })?;
        let lexical = quoted
            .strip_prefix('"')
            .and_then(|q| q.strip_suffix('"'))
            .ok_or_else(|| ModelError::Syntax { line, message: format!("unquoted literal {quoted}") })?;
        let dt_iri = dt
            .strip_prefix('<')
            .and_then(|d| d.strip_suffix('>'))
            .ok_or_else(|| ModelError::Syntax { line, message: format!("bad datatype {dt}") })?;
        let datatype = Datatype::from_iri(dt_iri)
            .ok_or_else(|| ModelError::Syntax { line, message: format!("unknown datatype {dt_iri}") })?;
        Term::Literal(Literal::new(unescape(lexical, line)?, datatype)?)
    };
    Ok(Some(Triple { subject, predicate, object }))
}

pub fn read_triples<R: BufRead>(input: R) -> Result<Vec<Triple>, ModelError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| ModelError::Syntax { line: i + 1, message: e.to_string() })?;
        if let Some(t) = parse_line(&line, i + 1)? {
            out.push(t);
        }
    }
    Ok(out)
}
