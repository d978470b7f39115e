//! The lifecycle query catalog (Q1..Q7) as pattern ASTs in both schema
//! variants, plus execution, rendering and variant comparison.

mod ast;
mod build;
mod execute;
mod render;

use thiserror::Error;

use crate::store::StoreError;

pub use ast::{Bind, NamedQuery, Params, QueryAst, QueryPart};
pub use build::{build, parse_iri_param};
pub use execute::{compare_variants, execute, value_rows, VariantComparison};
pub use render::{format_table, render, OutputFormat};

#[derive(Debug, Error, PartialEq)]
pub enum QueryError {
    #[error("unknown query {0:?}; expected Q1..Q7")]
    UnknownQuery(String),
    #[error("missing parameter {0:?}")]
    MissingParameter(String),
    #[error("malformed parameter {0:?}")]
    BadParameter(String),
    #[error("variable ?{0} is not bound by any pattern")]
    Unbound(String),
    #[error("non-numeric operand while computing ?{0}")]
    NotNumeric(String),
    #[error("unknown output format {0:?}")]
    UnknownFormat(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}
