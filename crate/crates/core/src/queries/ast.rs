use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::QueryError;
use crate::model::SchemaVariant;
use crate::store::{Aggregate, Filter, OrderKey, TriplePattern};

/// The catalog queries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NamedQuery {
    Q1,
    Q2,
    Q3,
    Q4,
    Q5,
    Q6,
    Q7,
}

impl NamedQuery {
    pub const ALL: [NamedQuery; 7] = [
        NamedQuery::Q1,
        NamedQuery::Q2,
        NamedQuery::Q3,
        NamedQuery::Q4,
        NamedQuery::Q5,
        NamedQuery::Q6,
        NamedQuery::Q7,
    ];

    /// Parameter names the query needs.
    pub fn parameters(self) -> &'static [&'static str] {
        match self {
            NamedQuery::Q1 | NamedQuery::Q2 => &["model"],
            NamedQuery::Q3 | NamedQuery::Q4 => &["training_set"],
            NamedQuery::Q5 | NamedQuery::Q7 => &["slice_lo", "slice_hi"],
            NamedQuery::Q6 => &["dataset"],
        }
    }
}

impl fmt::Display for NamedQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for NamedQuery {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NamedQuery::ALL
            .into_iter()
            .find(|q| q.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| QueryError::UnknownQuery(s.to_string()))
    }
}

/// Query parameters as text: IRIs in prefixed (`exp:v.…`) or full form,
/// integers for slice bounds.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Params(pub BTreeMap<String, String>);

impl Params {
    pub fn new() -> Params {
        Params::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Params {
        self.0.insert(key.to_string(), value.to_string());
        self
    }

    /// Parses `key=value`.
    pub fn insert_pair(&mut self, pair: &str) -> Result<(), QueryError> {
        let (k, v) = pair.split_once('=').ok_or_else(|| QueryError::BadParameter(pair.to_string()))?;
        self.0.insert(k.trim().to_string(), v.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<&str, QueryError> {
        self.0.get(key).map(String::as_str).ok_or_else(|| QueryError::MissingParameter(key.to_string()))
    }
}

/// Named group of patterns; the unit of clause accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryPart {
    pub name: String,
    pub patterns: Vec<TriplePattern>,
}

/// `alias = minuend - subtrahend`, computed per row before aggregation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bind {
    pub alias: String,
    pub minuend: String,
    pub subtrahend: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryAst {
    pub query: NamedQuery,
    pub variant: SchemaVariant,
    pub parts: Vec<QueryPart>,
    pub filters: Vec<Filter>,
    pub binds: Vec<Bind>,
    pub group_by: Vec<String>,
    pub aggregates: Vec<Aggregate>,
    pub order_by: Vec<OrderKey>,
    pub limit: Option<usize>,
    pub projection: Vec<String>,
    /// Follow-up query seeded with these columns of the first result row.
    pub then: Option<(Vec<String>, Box<QueryAst>)>,
}

impl QueryAst {
    pub fn new(query: NamedQuery, variant: SchemaVariant) -> QueryAst {
        QueryAst {
            query,
            variant,
            parts: Vec::new(),
            filters: Vec::new(),
            binds: Vec::new(),
            group_by: Vec::new(),
            aggregates: Vec::new(),
            order_by: Vec::new(),
            limit: None,
            projection: Vec::new(),
            then: None,
        }
    }

    pub fn part(&self, name: &str) -> Option<&QueryPart> {
        self.parts.iter().find(|p| p.name == name)
    }

    /// Triple patterns in the named part, including any follow-up query.
    pub fn clause_count(&self, part: &str) -> Option<usize> {
        let here = self.part(part).map(|p| p.patterns.len());
        let later = self.then.as_ref().and_then(|(_, q)| q.clause_count(part));
        match (here, later) {
            (None, None) => None,
            (a, b) => Some(a.unwrap_or(0) + b.unwrap_or(0)),
        }
    }

    pub fn part_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.parts.iter().map(|p| p.name.as_str()).collect();
        if let Some((_, q)) = &self.then {
            for n in q.part_names() {
                if !names.contains(&n) {
                    names.push(n);
                }
            }
        }
        names
    }

    pub fn patterns(&self) -> Vec<TriplePattern> {
        self.parts.iter().flat_map(|p| p.patterns.iter().cloned()).collect()
    }

    pub fn total_clauses(&self) -> usize {
        self.parts.iter().map(|p| p.patterns.len()).sum::<usize>()
            + self.then.as_ref().map_or(0, |(_, q)| q.total_clauses())
    }

    /// Columns of the result table.
    pub fn output_columns(&self) -> Vec<String> {
        match &self.then {
            Some((_, q)) => q.output_columns(),
            None => self.projection.clone(),
        }
    }

    fn pattern_vars(&self) -> BTreeSet<String> {
        self.parts.iter().flat_map(|p| &p.patterns).flat_map(|t| t.vars().map(str::to_string)).collect()
    }

    /// Every projected, grouped, aggregated or ordered variable must come from
    /// a pattern, a bind or an aggregate alias.
    pub fn check(&self, seeded: &[String]) -> Result<(), QueryError> {
        let mut known = self.pattern_vars();
        known.extend(seeded.iter().cloned());
        for b in &self.binds {
            for v in [&b.minuend, &b.subtrahend] {
                if !known.contains(v) {
                    return Err(QueryError::Unbound(v.clone()));
                }
            }
            known.insert(b.alias.clone());
        }
        for f in &self.filters {
            if let Some(v) = f.vars().find(|v| !known.contains(*v)) {
                return Err(QueryError::Unbound(v.to_string()));
            }
        }
        for v in self.group_by.iter().chain(self.aggregates.iter().map(|a| &a.var)) {
            if !known.contains(v) {
                return Err(QueryError::Unbound(v.clone()));
            }
        }
        let aggregated = !self.group_by.is_empty() || !self.aggregates.is_empty();
        let mut outputs: BTreeSet<String> =
            if aggregated { self.group_by.iter().cloned().collect() } else { known.clone() };
        outputs.extend(self.aggregates.iter().map(|a| a.alias.clone()));
        for v in self.projection.iter().chain(self.order_by.iter().map(|o| &o.column)) {
            if !outputs.contains(v) {
                return Err(QueryError::Unbound(v.clone()));
            }
        }
        if let Some((seed, next)) = &self.then {
            if let Some(v) = seed.iter().find(|v| !self.projection.contains(v)) {
                return Err(QueryError::Unbound(v.clone()));
            }
            next.check(seed)?;
        }
        Ok(())
    }
}
