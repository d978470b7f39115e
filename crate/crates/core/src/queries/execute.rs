use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::ast::{NamedQuery, Params, QueryAst};
use super::{build, QueryError};
use crate::model::{Datatype, Literal, SchemaVariant, Term};
use crate::store::{aggregate, Query, Solution, Table, TripleStore};

/// Runs the patterns, binds, grouping and projection of `ast`; a follow-up
/// query is seeded from the first row.
pub fn execute(store: &TripleStore, ast: &QueryAst) -> Result<Table, QueryError> {
    run(store, ast, &Solution::new())
}

/// `carried` values bind pattern variables they name and otherwise pass
/// straight through to the projection.
fn run(store: &TripleStore, ast: &QueryAst, carried: &Solution) -> Result<Table, QueryError> {
    let patterns = ast.patterns();
    let pattern_vars: BTreeSet<&str> = patterns.iter().flat_map(|t| t.vars()).collect();
    let seed: Solution = carried
        .iter()
        .filter(|(k, _)| pattern_vars.contains(k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let derived: BTreeSet<&str> = ast
        .binds
        .iter()
        .map(|b| b.alias.as_str())
        .chain(ast.aggregates.iter().map(|a| a.alias.as_str()))
        .chain(carried.keys().map(String::as_str).filter(|k| !pattern_vars.contains(k)))
        .collect();
    let mut needed: Vec<String> = Vec::new();
    let mut need = |v: &String| {
        if !derived.contains(v.as_str()) && !needed.contains(v) {
            needed.push(v.clone());
        }
    };
    ast.binds.iter().flat_map(|b| [&b.minuend, &b.subtrahend]).for_each(&mut need);
    ast.group_by.iter().for_each(&mut need);
    ast.aggregates.iter().map(|a| &a.var).for_each(&mut need);
    ast.projection.iter().for_each(&mut need);
    ast.order_by.iter().map(|o| &o.column).for_each(&mut need);

    let seed = (!seed.is_empty()).then_some(&seed);
    let mut table = store.query_table(&Query { patterns: &patterns, filters: &ast.filters, seed }, &needed)?;
    for b in &ast.binds {
        let (i, j) = (column(&table, &b.minuend)?, column(&table, &b.subtrahend)?);
        for row in &mut table.rows {
            let d = difference(&row[i], &row[j]).ok_or_else(|| QueryError::NotNumeric(b.alias.clone()))?;
            row.push(Term::Literal(Literal::float(d)));
        }
        table.columns.push(b.alias.clone());
    }
    let table = aggregate(&table, &ast.group_by, &ast.aggregates, &ast.order_by, ast.limit)?;

    if let Some((seed_cols, next)) = &ast.then {
        let Some(first) = table.rows.first() else {
            return Ok(Table { columns: next.output_columns(), rows: Vec::new() });
        };
        let mut solution = Solution::new();
        for c in seed_cols {
            solution.insert(c.clone(), first[column(&table, c)?].clone());
        }
        return run(store, next, &solution);
    }
    project(&table, &ast.projection, carried)
}

fn column(table: &Table, name: &str) -> Result<usize, QueryError> {
    table.column(name).ok_or_else(|| QueryError::Unbound(name.to_string()))
}

/// Numeric difference; two timestamps give milliseconds.
fn difference(a: &Term, b: &Term) -> Option<f64> {
    let (a, b) = (a.as_literal()?, b.as_literal()?);
    let d = a.as_f64()? - b.as_f64()?;
    if a.datatype() == Datatype::TimestampMicros && b.datatype() == Datatype::TimestampMicros {
        Some(d / 1000.0)
    } else {
        Some(d)
    }
}

fn project(table: &Table, projection: &[String], carried: &Solution) -> Result<Table, QueryError> {
    enum Source<'a> {
        Column(usize),
        Seed(&'a Term),
    }
    let sources = projection
        .iter()
        .map(|p| match table.column(p) {
            Some(i) => Ok(Source::Column(i)),
            None => carried.get(p).map(Source::Seed).ok_or_else(|| QueryError::Unbound(p.clone())),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows = table
        .rows
        .iter()
        .map(|row| {
            sources
                .iter()
                .map(|s| match s {
                    Source::Column(i) => row[*i].clone(),
                    Source::Seed(t) => (*t).clone(),
                })
                .collect()
        })
        .collect();
    Ok(Table { columns: projection.to_vec(), rows })
}

/// Rows with IRI cells removed, rendered as values and sorted: the
/// encoding-independent content of a result.
pub fn value_rows(table: &Table) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|row| row.iter().filter(|t| t.as_iri().is_none()).map(Term::value_string).collect())
        .collect();
    rows.sort();
    rows
}

#[derive(Clone, Debug, Serialize)]
pub struct VariantComparison {
    pub query: NamedQuery,
    pub equal: bool,
    pub rows_with: usize,
    pub rows_without: usize,
    #[serde(with = "seconds")]
    pub time_with: Duration,
    #[serde(with = "seconds")]
    pub time_without: Duration,
}

impl VariantComparison {
    /// time_without / time_with.
    pub fn speedup(&self) -> f64 {
        self.time_without.as_secs_f64() / self.time_with.as_secs_f64().max(1e-9)
    }
}

mod seconds {
    use std::time::Duration;

    pub fn serialize<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }
}

/// Builds and runs `q` against each store in its own encoding, one after the
/// other, timing each execution.
pub fn compare_variants(
    store_with: &TripleStore,
    store_without: &TripleStore,
    q: NamedQuery,
    params: &Params,
) -> Result<VariantComparison, QueryError> {
    let timed = |store: &TripleStore, v: SchemaVariant| -> Result<(Table, Duration), QueryError> {
        let ast = build(q, v, params)?;
        let start = Instant::now();
        let table = execute(store, &ast)?;
        Ok((table, start.elapsed()))
    };
    let (with, time_with) = timed(store_with, SchemaVariant::WithProvMl)?;
    let (without, time_without) = timed(store_without, SchemaVariant::WithoutProvMl)?;
    Ok(VariantComparison {
        query: q,
        equal: value_rows(&with) == value_rows(&without),
        rows_with: with.len(),
        rows_without: without.len(),
        time_with,
        time_without,
    })
}
