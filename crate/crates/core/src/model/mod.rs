//! Terms, triples and the provenance vocabulary shared by every other module.

pub mod ntriples;
mod term;
mod vocab;

use thiserror::Error;

pub use term::{Datatype, Iri, Literal, Namespace, Term, Triple};
pub use vocab::{class_iri, is_subclass, ClassId, RelationId};

/// Graph encoding: PROV-ML specialized classes, or generic PROVLake classes
/// qualified by `provlake:tag` literals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaVariant {
    WithProvMl,
    WithoutProvMl,
}

impl SchemaVariant {
    pub const BOTH: [SchemaVariant; 2] = [SchemaVariant::WithProvMl, SchemaVariant::WithoutProvMl];

    pub fn label(self) -> &'static str {
        match self {
            SchemaVariant::WithProvMl => "with",
            SchemaVariant::WithoutProvMl => "without",
        }
    }

    pub fn parse(text: &str) -> Option<SchemaVariant> {
        match text {
            "with" | "with_prov_ml" | "WithProvML" => Some(SchemaVariant::WithProvMl),
            "without" | "without_prov_ml" | "WithoutProvML" => Some(SchemaVariant::WithoutProvMl),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid local name {0:?}")]
    InvalidName(String),
    #[error("unknown namespace prefix {0:?}")]
    UnknownNamespace(String),
    #[error("lexical form {lexical:?} is not a valid {datatype:?}")]
    InvalidLiteral { lexical: String, datatype: Datatype },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

/// Builds an IRI from a short prefix and a local name. Deterministic.
pub fn mint_iri(ns: &str, local: &str) -> Result<Term, ModelError> {
    if local.is_empty() {
        return Err(ModelError::InvalidName(String::new()));
    }
    let ns = Namespace::from_prefix(ns).ok_or_else(|| ModelError::UnknownNamespace(ns.to_string()))?;
    Ok(Term::Iri(Iri::new(ns, local)?))
}
