use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Fixed short prefixes. The expansion table is constant and written into
/// every export header.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Namespace {
    Rdf,
    Rdfs,
    Prov,
    ProvMl,
    ProvLake,
    Exp,
    Dom,
}

impl Namespace {
    pub const ALL: [Namespace; 7] = [
        Namespace::Rdf,
        Namespace::Rdfs,
        Namespace::Prov,
        Namespace::ProvMl,
        Namespace::ProvLake,
        Namespace::Exp,
        Namespace::Dom,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            Namespace::Rdf => "rdf",
            Namespace::Rdfs => "rdfs",
            Namespace::Prov => "prov",
            Namespace::ProvMl => "provml",
            Namespace::ProvLake => "provlake",
            Namespace::Exp => "exp",
            Namespace::Dom => "dom",
        }
    }

    pub fn base(self) -> &'static str {
        match self {
            Namespace::Rdf => "http://www.w3.org/1999/02/22-rdf-syntax-ns#",
            Namespace::Rdfs => "http://www.w3.org/2000/01/rdf-schema#",
            Namespace::Prov => "http://www.w3.org/ns/prov#",
            Namespace::ProvMl => "http://example.org/provml#",
            Namespace::ProvLake => "http://example.org/provlake#",
            Namespace::Exp => "http://example.org/exp#",
            Namespace::Dom => "http://example.org/domain#",
        }
    }

    pub fn from_prefix(prefix: &str) -> Option<Namespace> {
        Namespace::ALL.into_iter().find(|ns| ns.prefix() == prefix)
    }

    /// Splits a full IRI into namespace and local name.
    pub fn split_full(iri: &str) -> Option<(Namespace, &str)> {
        Namespace::ALL.into_iter().find_map(|ns| iri.strip_prefix(ns.base()).map(|local| (ns, local)))
    }
}

/// A named node: namespace prefix plus a non-empty, whitespace-free local name.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Iri {
    ns: Namespace,
    local: Box<str>,
}

impl Iri {
    pub fn new(ns: Namespace, local: impl Into<String>) -> Result<Iri, ModelError> {
        let local = local.into();
        if local.is_empty() || local.chars().any(char::is_whitespace) || local.contains(['<', '>', '"']) {
            return Err(ModelError::InvalidName(local));
        }
        Ok(Iri { ns, local: local.into_boxed_str() })
    }

    /// Parses `prefix:local`.
    pub fn parse_prefixed(text: &str) -> Result<Iri, ModelError> {
        let (prefix, local) = text.split_once(':').ok_or_else(|| ModelError::InvalidName(text.to_string()))?;
        let ns = Namespace::from_prefix(prefix).ok_or_else(|| ModelError::UnknownNamespace(prefix.to_string()))?;
        Iri::new(ns, local)
    }

    pub fn namespace(&self) -> Namespace {
        self.ns
    }

    pub fn local(&self) -> &str {
        &self.local
    }

    pub fn full(&self) -> String {
        format!("{}{}", self.ns.base(), self.local)
    }
}

impl fmt::Display for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.ns.prefix(), self.local)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Datatype {
    String,
    Integer,
    Float,
    TimestampMicros,
    Boolean,
}

impl Datatype {
    pub fn iri(self) -> String {
        match self {
            Datatype::String => "http://www.w3.org/2001/XMLSchema#string".into(),
            Datatype::Integer => "http://www.w3.org/2001/XMLSchema#integer".into(),
            Datatype::Float => "http://www.w3.org/2001/XMLSchema#double".into(),
            Datatype::Boolean => "http://www.w3.org/2001/XMLSchema#boolean".into(),
            Datatype::TimestampMicros => format!("{}timestampMicros", Namespace::ProvLake.base()),
        }
    }

    pub fn from_iri(iri: &str) -> Option<Datatype> {
        [Datatype::String, Datatype::Integer, Datatype::Float, Datatype::TimestampMicros, Datatype::Boolean]
            .into_iter()
            .find(|dt| dt.iri() == iri)
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, Datatype::Integer | Datatype::Float | Datatype::TimestampMicros)
    }
}

/// Typed literal. The lexical form always parses under its datatype.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    lexical: Box<str>,
    datatype: Datatype,
}

impl Literal {
    pub fn new(lexical: impl Into<String>, datatype: Datatype) -> Result<Literal, ModelError> {
        let lexical = lexical.into();
        let ok = match datatype {
            Datatype::String => true,
            Datatype::Integer | Datatype::TimestampMicros => {
                lexical.parse::<i64>().is_ok_and(|v| v.to_string() == lexical)
            }
            Datatype::Float => lexical.parse::<f64>().is_ok_and(|v| v.is_finite() && v.to_string() == lexical),
            Datatype::Boolean => lexical == "true" || lexical == "false",
        };
        if !ok {
            return Err(ModelError::InvalidLiteral { lexical, datatype });
        }
        Ok(Literal { lexical: lexical.into_boxed_str(), datatype })
    }

    pub fn string(value: impl Into<String>) -> Literal {
        Literal { lexical: value.into().into_boxed_str(), datatype: Datatype::String }
    }

    pub fn integer(value: i64) -> Literal {
        Literal { lexical: value.to_string().into_boxed_str(), datatype: Datatype::Integer }
    }

    /// Non-finite values are clamped to the nearest finite representable value.
    pub fn float(value: f64) -> Literal {
        let value = if value.is_nan() { 0.0 } else { value.clamp(f64::MIN, f64::MAX) };
        Literal { lexical: value.to_string().into_boxed_str(), datatype: Datatype::Float }
    }

    pub fn timestamp(micros: i64) -> Literal {
        Literal { lexical: micros.to_string().into_boxed_str(), datatype: Datatype::TimestampMicros }
    }

    pub fn boolean(value: bool) -> Literal {
        Literal { lexical: value.to_string().into_boxed_str(), datatype: Datatype::Boolean }
    }

    pub fn lexical(&self) -> &str {
        &self.lexical
    }

    pub fn datatype(&self) -> Datatype {
        self.datatype
    }

    /// Numeric interpretation; integers widen to floats.
    pub fn as_f64(&self) -> Option<f64> {
        if self.datatype.is_numeric() {
            self.lexical.parse().ok()
        } else {
            None
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self.datatype {
            Datatype::Integer | Datatype::TimestampMicros => self.lexical.parse().ok(),
            _ => None,
        }
    }

    /// Comparison used by filters and ordering: numeric when both sides are
    /// numeric, otherwise by lexical form within the same datatype.
    pub fn compare(&self, other: &Literal) -> Option<Ordering> {
        match (self.as_f64(), other.as_f64()) {
            (Some(a), Some(b)) => a.partial_cmp(&b),
            (None, None) if self.datatype == other.datatype => Some(self.lexical.cmp(&other.lexical)),
            _ => None,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.datatype {
            Datatype::String => write!(f, "{:?}", self.lexical),
            _ => f.write_str(&self.lexical),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Iri(Iri),
    Literal(Literal),
}

impl Term {
    pub fn as_iri(&self) -> Option<&Iri> {
        match self {
            Term::Iri(iri) => Some(iri),
            Term::Literal(_) => None,
        }
    }

    pub fn as_literal(&self) -> Option<&Literal> {
        match self {
            Term::Literal(lit) => Some(lit),
            Term::Iri(_) => None,
        }
    }

    /// Value-level rendering: literal lexical form, or the prefixed IRI.
    pub fn value_string(&self) -> String {
        match self {
            Term::Iri(iri) => iri.to_string(),
            Term::Literal(lit) => lit.lexical().to_string(),
        }
    }
}

impl From<Iri> for Term {
    fn from(iri: Iri) -> Self {
        Term::Iri(iri)
    }
}

impl From<Literal> for Term {
    fn from(lit: Literal) -> Self {
        Term::Literal(lit)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(iri) => iri.fmt(f),
            Term::Literal(lit) => lit.fmt(f),
        }
    }
}

/// Subject and predicate are always named nodes; there are no blank nodes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: Iri,
    pub predicate: Iri,
    pub object: Term,
}

impl Triple {
    pub fn new(subject: Iri, predicate: Iri, object: impl Into<Term>) -> Triple {
        Triple { subject, predicate, object: object.into() }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}
