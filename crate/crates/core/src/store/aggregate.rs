use std::cmp::Ordering;

use rustc_hash::FxHashMap;

use super::StoreError;
use crate::model::{Literal, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AggFunc {
    Min,
    Max,
    Avg,
    Count,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
            AggFunc::Avg => "AVG",
            AggFunc::Count => "COUNT",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Aggregate {
    pub func: AggFunc,
    pub var: String,
    pub alias: String,
}

impl Aggregate {
    pub fn new(func: AggFunc, var: impl Into<String>, alias: impl Into<String>) -> Aggregate {
        Aggregate { func, var: var.into(), alias: alias.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OrderKey {
    pub column: String,
    pub descending: bool,
}

impl OrderKey {
    pub fn asc(column: impl Into<String>) -> OrderKey {
        OrderKey { column: column.into(), descending: false }
    }

    pub fn desc(column: impl Into<String>) -> OrderKey {
        OrderKey { column: column.into(), descending: true }
    }
}

/// Named columns of terms.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Term>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Total order used for sorting: numeric literals by value, everything else
/// by rendered form.
pub fn compare_terms(a: &Term, b: &Term) -> Ordering {
    match (a, b) {
        (Term::Literal(x), Term::Literal(y)) => x
            .compare(y)
            .filter(|o| o.is_ne())
            .unwrap_or_else(|| (x.lexical(), x.datatype()).cmp(&(y.lexical(), y.datatype()))),
        (Term::Iri(x), Term::Iri(y)) => x.cmp(y),
        (Term::Iri(_), Term::Literal(_)) => Ordering::Less,
        (Term::Literal(_), Term::Iri(_)) => Ordering::Greater,
    }
}

fn compare_rows(a: &[Term], b: &[Term]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| compare_terms(x, y)).find(|o| o.is_ne()).unwrap_or_else(|| a.len().cmp(&b.len()))
}

enum Acc {
    Min(Term, f64),
    Max(Term, f64),
    Avg(f64, usize),
    Count(usize),
}

fn numeric(term: &Term, var: &str) -> Result<f64, StoreError> {
    term.as_literal().and_then(Literal::as_f64).ok_or_else(|| StoreError::TypeMismatch(var.to_string()))
}

fn start(agg: &Aggregate, term: &Term) -> Result<Acc, StoreError> {
    Ok(match agg.func {
        AggFunc::Min => Acc::Min(term.clone(), numeric(term, &agg.var)?),
        AggFunc::Max => Acc::Max(term.clone(), numeric(term, &agg.var)?),
        AggFunc::Avg => Acc::Avg(numeric(term, &agg.var)?, 1),
        AggFunc::Count => Acc::Count(1),
    })
}

fn update(acc: &mut Acc, agg: &Aggregate, term: &Term) -> Result<(), StoreError> {
    match acc {
        Acc::Min(best, v) => {
            let x = numeric(term, &agg.var)?;
            if x < *v {
                *best = term.clone();
                *v = x;
            }
        }
        Acc::Max(best, v) => {
            let x = numeric(term, &agg.var)?;
            if x > *v {
                *best = term.clone();
                *v = x;
            }
        }
        Acc::Avg(sum, n) => {
            *sum += numeric(term, &agg.var)?;
            *n += 1;
        }
        Acc::Count(n) => *n += 1,
    }
    Ok(())
}

fn finish(acc: Acc) -> Term {
    match acc {
        Acc::Min(t, _) | Acc::Max(t, _) => t,
        Acc::Avg(sum, n) => Term::Literal(Literal::float(sum / n as f64)),
        Acc::Count(n) => Term::Literal(Literal::integer(n as i64)),
    }
}

fn index_of(table: &Table, name: &str) -> Result<usize, StoreError> {
    table.column(name).ok_or_else(|| StoreError::UnknownVariable(name.to_string()))
}

/// Groups rows, computes aggregates, orders and truncates. Without grouping
/// or aggregates the rows pass through unchanged apart from ordering. Ties
/// in `order_by` fall back to the group key (or the whole row).
pub fn aggregate(
    table: &Table,
    group_by: &[String],
    aggs: &[Aggregate],
    order_by: &[OrderKey],
    limit: Option<usize>,
) -> Result<Table, StoreError> {
    let mut out = if group_by.is_empty() && aggs.is_empty() {
        table.clone()
    } else {
        let keys = group_by.iter().map(|g| index_of(table, g)).collect::<Result<Vec<_>, _>>()?;
        let vals = aggs.iter().map(|a| index_of(table, &a.var)).collect::<Result<Vec<_>, _>>()?;
        let mut groups: FxHashMap<Vec<Term>, Vec<Acc>> = FxHashMap::default();
        let mut order: Vec<Vec<Term>> = Vec::new();
        for row in &table.rows {
            let key: Vec<Term> = keys.iter().map(|&k| row[k].clone()).collect();
            match groups.get_mut(&key) {
                Some(accs) => {
                    for ((acc, agg), &c) in accs.iter_mut().zip(aggs).zip(&vals) {
                        update(acc, agg, &row[c])?;
                    }
                }
                None => {
                    let accs = aggs.iter().zip(&vals).map(|(agg, &c)| start(agg, &row[c])).collect::<Result<_, _>>()?;
                    order.push(key.clone());
                    groups.insert(key, accs);
                }
            }
        }
        let columns = group_by.iter().cloned().chain(aggs.iter().map(|a| a.alias.clone())).collect();
        let rows = order
            .into_iter()
            .map(|key| {
                let accs = groups.remove(&key).expect("every key has accumulators");
                key.into_iter().chain(accs.into_iter().map(finish)).collect()
            })
            .collect();
        Table { columns, rows }
    };

    let sort_cols =
        order_by.iter().map(|k| index_of(&out, &k.column).map(|i| (i, k.descending))).collect::<Result<Vec<_>, _>>()?;
    let key_len = if group_by.is_empty() && aggs.is_empty() { out.columns.len() } else { group_by.len() };
    out.rows.sort_by(|a, b| {
        sort_cols
            .iter()
            .map(|&(i, desc)| {
                let o = compare_terms(&a[i], &b[i]);
                if desc {
                    o.reverse()
                } else {
                    o
                }
            })
            .find(|o| o.is_ne())
            .unwrap_or_else(|| compare_rows(&a[..key_len], &b[..key_len]))
    });
    if let Some(n) = limit {
        out.rows.truncate(n);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Iri, Namespace};

    fn lit_f(v: f64) -> Term {
        Term::Literal(Literal::float(v))
    }

    fn lit_i(v: i64) -> Term {
        Term::Literal(Literal::integer(v))
    }

    fn one_col(values: Vec<Term>) -> Table {
        Table { columns: vec!["v".into()], rows: values.into_iter().map(|v| vec![v]).collect() }
    }

    #[test]
    fn min_single_group() {
        let t = one_col(vec![lit_f(3.0), lit_f(1.0), lit_f(2.0)]);
        let out = aggregate(&t, &[], &[Aggregate::new(AggFunc::Min, "v", "m")], &[], None).unwrap();
        assert_eq!(out.rows, vec![vec![lit_f(1.0)]]);
    }

    #[test]
    fn avg_of_integers() {
        let t = one_col(vec![lit_i(1), lit_i(2), lit_i(3)]);
        let out = aggregate(&t, &[], &[Aggregate::new(AggFunc::Avg, "v", "a")], &[], None).unwrap();
        assert_eq!(out.rows, vec![vec![lit_f(2.0)]]);
    }

    #[test]
    fn count_grouped_by_two_keys() {
        let k = |s: &str| Term::Iri(Iri::new(Namespace::Exp, s).unwrap());
        let rows = vec![
            vec![k("a"), k("x"), lit_i(1)],
            vec![k("b"), k("y"), lit_i(2)],
            vec![k("a"), k("x"), lit_i(3)],
            vec![k("b"), k("y"), lit_i(4)],
            vec![k("a"), k("x"), lit_i(5)],
        ];
        let t = Table { columns: vec!["g1".into(), "g2".into(), "v".into()], rows };
        let out = aggregate(
            &t,
            &["g1".into(), "g2".into()],
            &[Aggregate::new(AggFunc::Count, "v", "n")],
            &[OrderKey::desc("n")],
            None,
        )
        .unwrap();
        let counts: Vec<Term> = out.rows.iter().map(|r| r[2].clone()).collect();
        assert_eq!(counts, vec![lit_i(3), lit_i(2)]);
    }

    #[test]
    fn non_numeric_under_min_is_a_type_mismatch() {
        let t = one_col(vec![lit_f(1.0), Term::Literal(Literal::string("x"))]);
        assert_eq!(
            aggregate(&t, &[], &[Aggregate::new(AggFunc::Max, "v", "m")], &[], None),
            Err(StoreError::TypeMismatch("v".into()))
        );
    }

    #[test]
    fn ties_break_on_group_key() {
        let k = |s: &str| Term::Iri(Iri::new(Namespace::Exp, s).unwrap());
        let rows = vec![vec![k("b"), lit_f(1.0)], vec![k("a"), lit_f(1.0)], vec![k("c"), lit_f(0.5)]];
        let t = Table { columns: vec!["m".into(), "v".into()], rows };
        let out =
            aggregate(&t, &["m".into()], &[Aggregate::new(AggFunc::Min, "v", "best")], &[OrderKey::asc("best")], None)
                .unwrap();
        let keys: Vec<Term> = out.rows.iter().map(|r| r[0].clone()).collect();
        assert_eq!(keys, vec![k("c"), k("a"), k("b")]);
    }
}
