use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use crate::model::{Iri, Term};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PatternTerm {
    Const(Term),
    Var(String),
}

impl PatternTerm {
    pub fn var(name: impl Into<String>) -> PatternTerm {
        PatternTerm::Var(name.into())
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            PatternTerm::Var(v) => Some(v),
            PatternTerm::Const(_) => None,
        }
    }
}

impl From<Term> for PatternTerm {
    fn from(t: Term) -> Self {
        PatternTerm::Const(t)
    }
}

impl From<Iri> for PatternTerm {
    fn from(iri: Iri) -> Self {
        PatternTerm::Const(Term::Iri(iri))
    }
}

impl fmt::Display for PatternTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternTerm::Var(v) => write!(f, "?{v}"),
            PatternTerm::Const(t) => t.fmt(f),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TriplePattern {
    pub s: PatternTerm,
    pub p: PatternTerm,
    pub o: PatternTerm,
}

impl TriplePattern {
    pub fn new(s: impl Into<PatternTerm>, p: impl Into<PatternTerm>, o: impl Into<PatternTerm>) -> TriplePattern {
        TriplePattern { s: s.into(), p: p.into(), o: o.into() }
    }

    pub fn positions(&self) -> [&PatternTerm; 3] {
        [&self.s, &self.p, &self.o]
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.positions().into_iter().filter_map(PatternTerm::as_var)
    }
}

impl fmt::Display for TriplePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.s, self.p, self.o)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Operand {
    Var(String),
    Const(Term),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Var(v) => write!(f, "?{v}"),
            Operand::Const(t) => t.fmt(f),
        }
    }
}

/// Equality or comparison between two operands.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Filter {
    pub left: Operand,
    pub op: CmpOp,
    pub right: Operand,
}

impl Filter {
    pub fn new(left: Operand, op: CmpOp, right: Operand) -> Filter {
        Filter { left, op, right }
    }

    pub fn var_const(var: impl Into<String>, op: CmpOp, value: impl Into<Term>) -> Filter {
        Filter { left: Operand::Var(var.into()), op, right: Operand::Const(value.into()) }
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        [&self.left, &self.right].into_iter().filter_map(|o| match o {
            Operand::Var(v) => Some(v.as_str()),
            Operand::Const(_) => None,
        })
    }

    /// Applies the operator to two resolved terms. Literals compare by value
    /// (integers widen to floats); an incomparable pair only satisfies `!=`.
    pub fn holds(op: CmpOp, a: &Term, b: &Term) -> bool {
        let ord = match (a, b) {
            (Term::Literal(x), Term::Literal(y)) => x.compare(y),
            (Term::Iri(x), Term::Iri(y)) => Some(x.cmp(y)),
            _ => None,
        };
        match (op, ord) {
            (CmpOp::Eq, Some(o)) => o == Ordering::Equal,
            (CmpOp::Ne, Some(o)) => o != Ordering::Equal,
            (CmpOp::Ne, None) => true,
            (CmpOp::Lt, Some(o)) => o == Ordering::Less,
            (CmpOp::Le, Some(o)) => o != Ordering::Greater,
            (CmpOp::Gt, Some(o)) => o == Ordering::Greater,
            (CmpOp::Ge, Some(o)) => o != Ordering::Less,
            _ => false,
        }
    }
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FILTER({} {} {})", self.left, self.op.symbol(), self.right)
    }
}

/// Variable bindings of one result.
pub type Solution = BTreeMap<String, Term>;
