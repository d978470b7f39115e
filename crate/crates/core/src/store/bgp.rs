//! Basic graph pattern evaluation: greedy join ordering (connected patterns
//! first, then estimated cardinality), then depth-first index nested loops
//! with filters applied as soon as their variables are bound.

use std::cmp::Ordering;

use super::aggregate::Table;
use super::pattern::{CmpOp, Filter, Operand, PatternTerm, Solution, TriplePattern};
use super::{StoreError, TripleStore};
use crate::model::Term;

const UNBOUND: u32 = u32::MAX;
/// Exact counts of constant-only patterns stop here; beyond it the pattern
/// is simply "large".
const COUNT_CAP: usize = 10_000;

#[derive(Clone, Copy, Debug)]
enum Slot {
    Const(u32),
    Var(usize),
}

enum FilterSide {
    Var(usize),
    Const(Term, Option<f64>),
}

struct CompiledFilter {
    left: FilterSide,
    op: CmpOp,
    right: FilterSide,
}

struct Step {
    slots: [Slot; 3],
    filters: Vec<CompiledFilter>,
}

struct Plan {
    vars: Vec<String>,
    steps: Vec<Step>,
    /// Pattern index of each step.
    order: Vec<usize>,
    initial: Vec<u32>,
    /// Filters over constants or seeded variables only.
    upfront: Vec<CompiledFilter>,
    /// A constant or seed value absent from the dictionary: no solutions.
    empty: bool,
}

/// A compiled graph pattern with optional seed bindings.
pub struct Query<'a> {
    pub patterns: &'a [TriplePattern],
    pub filters: &'a [Filter],
    pub seed: Option<&'a Solution>,
}

fn slot_of(vars: &mut Vec<String>, name: &str) -> usize {
    match vars.iter().position(|v| v == name) {
        Some(i) => i,
        None => {
            vars.push(name.to_string());
            vars.len() - 1
        }
    }
}

impl TripleStore {
    fn estimate(&self, slots: &[Slot; 3], bound: &[bool]) -> f64 {
        let known = |s: &Slot| match s {
            Slot::Const(_) => true,
            Slot::Var(v) => bound[*v],
        };
        let only_consts = slots.iter().all(|s| matches!(s, Slot::Const(_)) || !known(s));
        if only_consts {
            let c = |s: &Slot| match s {
                Slot::Const(id) => Some(*id),
                Slot::Var(_) => None,
            };
            return self.scan(c(&slots[0]), c(&slots[1]), c(&slots[2])).take(COUNT_CAP).count() as f64;
        }
        let total = self.len().max(1) as f64;
        let (ks, ko) = (known(&slots[0]), known(&slots[2]));
        match slots[1] {
            Slot::Const(p) => {
                let st = self.predicate_stats(p);
                let n = st.count as f64;
                match (ks, ko) {
                    (true, true) => 1.0_f64.min(n),
                    (true, false) => n / st.subjects.max(1) as f64,
                    (false, true) => n / st.objects.max(1) as f64,
                    (false, false) => n,
                }
            }
            Slot::Var(_) => match (ks, ko) {
                (true, true) => 1.0,
                (true, false) => total / self.distinct_subjects().max(1) as f64,
                (false, true) => total / self.distinct_subjects().max(1) as f64,
                (false, false) => total,
            },
        }
    }

    fn compile_side(&self, vars: &mut Vec<String>, op: &Operand) -> FilterSide {
        match op {
            Operand::Var(v) => FilterSide::Var(slot_of(vars, v)),
            Operand::Const(t) => FilterSide::Const(t.clone(), t.as_literal().and_then(|l| l.as_f64())),
        }
    }

    fn plan(&self, q: &Query<'_>) -> Result<Plan, StoreError> {
        if q.patterns.is_empty() {
            return Err(StoreError::EmptyPattern);
        }
        let mut vars = Vec::new();
        let mut empty = false;
        let mut raw: Vec<[Slot; 3]> = Vec::with_capacity(q.patterns.len());
        for pattern in q.patterns {
            let mut slots = [Slot::Const(0); 3];
            for (i, pos) in pattern.positions().into_iter().enumerate() {
                slots[i] = match pos {
                    PatternTerm::Var(v) => Slot::Var(slot_of(&mut vars, v)),
                    PatternTerm::Const(t) => match self.lookup(t) {
                        Some(id) => Slot::Const(id),
                        None => {
                            empty = true;
                            Slot::Const(UNBOUND)
                        }
                    },
                };
            }
            raw.push(slots);
        }
        let pattern_vars = vars.len();
        for filter in q.filters {
            for v in filter.vars() {
                if !vars[..pattern_vars].iter().any(|x| x == v) && !q.seed.is_some_and(|s| s.contains_key(v)) {
                    return Err(StoreError::UnknownVariable(v.to_string()));
                }
            }
        }

        let mut initial = vec![UNBOUND; vars.len()];
        if let Some(seed) = q.seed {
            for (name, term) in seed {
                let slot = slot_of(&mut vars, name);
                if slot >= initial.len() {
                    initial.resize(slot + 1, UNBOUND);
                }
                match self.lookup(term) {
                    Some(id) => initial[slot] = id,
                    None if slot < pattern_vars => empty = true,
                    None => {}
                }
            }
        }

        let mut bound: Vec<bool> = initial.iter().map(|&id| id != UNBOUND).collect();
        let mut remaining: Vec<usize> = (0..raw.len()).collect();
        // A pattern whose variables are all unbound always scans the same
        // range; count it once.
        let mut unbound_counts: Vec<Option<f64>> = vec![None; raw.len()];
        let mut order = Vec::with_capacity(raw.len());
        while !remaining.is_empty() {
            let connected =
                |slots: &[Slot; 3], bound: &[bool]| slots.iter().any(|s| matches!(s, Slot::Var(v) if bound[*v]));
            let (best_idx, _) = remaining
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    let fresh =
                        raw[p].iter().all(|s| matches!(s, Slot::Const(_)) || matches!(s, Slot::Var(v) if !bound[*v]));
                    let est = match unbound_counts[p] {
                        Some(n) if fresh => n,
                        _ => {
                            let n = self.estimate(&raw[p], &bound);
                            if fresh {
                                unbound_counts[p] = Some(n);
                            }
                            n
                        }
                    };
                    (i, (est, !connected(&raw[p], &bound), p))
                })
                .min_by(|a, b| {
                    // Connected patterns first: a cross product of small
                    // prospective sets multiplies every later step.
                    a.1 .1
                        .cmp(&b.1 .1)
                        .then(a.1 .0.partial_cmp(&b.1 .0).unwrap_or(Ordering::Equal))
                        .then(a.1 .2.cmp(&b.1 .2))
                })
                .expect("remaining is non-empty");
            let p = remaining.remove(best_idx);
            for s in &raw[p] {
                if let Slot::Var(v) = s {
                    bound[*v] = true;
                }
            }
            order.push(p);
        }

        // Schedule each filter at the first step binding all its variables.
        let mut steps: Vec<Step> = order.iter().map(|&p| Step { slots: raw[p], filters: Vec::new() }).collect();
        let mut upfront = Vec::new();
        for filter in q.filters {
            let compiled = CompiledFilter {
                left: self.compile_side(&mut vars, &filter.left),
                op: filter.op,
                right: self.compile_side(&mut vars, &filter.right),
            };
            let needed: Vec<usize> = [&compiled.left, &compiled.right]
                .into_iter()
                .filter_map(|s| match s {
                    FilterSide::Var(v) => Some(*v),
                    FilterSide::Const(..) => None,
                })
                .filter(|v| !q.seed.is_some_and(|s| s.contains_key(&vars[*v])))
                .collect();
            let mut bound_now = vec![false; vars.len()];
            let at = steps.iter().position(|step| {
                for s in &step.slots {
                    if let Slot::Var(v) = s {
                        bound_now[*v] = true;
                    }
                }
                needed.iter().all(|v| bound_now[*v])
            });
            match (needed.is_empty(), at) {
                (true, _) => upfront.push(compiled),
                (false, Some(i)) => steps[i].filters.push(compiled),
                (false, None) => unreachable!("filter variables were checked against the patterns"),
            }
        }
        initial.resize(vars.len(), UNBOUND);
        Ok(Plan { vars, steps, order, initial, upfront, empty })
    }

    fn side_value<'a>(&'a self, side: &'a FilterSide, row: &[u32]) -> (Option<&'a Term>, Option<f64>) {
        match side {
            FilterSide::Var(v) => {
                let id = row[*v];
                if id == UNBOUND {
                    (None, None)
                } else {
                    (Some(self.term(id)), self.numeric(id))
                }
            }
            FilterSide::Const(t, n) => (Some(t), *n),
        }
    }

    fn passes(&self, f: &CompiledFilter, row: &[u32]) -> bool {
        let (lt, ln) = self.side_value(&f.left, row);
        let (rt, rn) = self.side_value(&f.right, row);
        if let (Some(a), Some(b)) = (ln, rn) {
            let ord = a.partial_cmp(&b);
            return match (f.op, ord) {
                (CmpOp::Eq, Some(o)) => o == Ordering::Equal,
                (CmpOp::Ne, Some(o)) => o != Ordering::Equal,
                (CmpOp::Lt, Some(o)) => o == Ordering::Less,
                (CmpOp::Le, Some(o)) => o != Ordering::Greater,
                (CmpOp::Gt, Some(o)) => o == Ordering::Greater,
                (CmpOp::Ge, Some(o)) => o != Ordering::Less,
                _ => false,
            };
        }
        match (lt, rt) {
            (Some(a), Some(b)) => Filter::holds(f.op, a, b),
            _ => false,
        }
    }

    fn dfs(&self, plan: &Plan, depth: usize, row: &mut [u32], f: &mut dyn FnMut(&[u32]) -> bool) -> bool {
        let Some(step) = plan.steps.get(depth) else {
            return f(row);
        };
        let resolve = |s: &Slot, row: &[u32]| match *s {
            Slot::Const(id) => Some(id),
            Slot::Var(v) => (row[v] != UNBOUND).then_some(row[v]),
        };
        let (s, p, o) = (resolve(&step.slots[0], row), resolve(&step.slots[1], row), resolve(&step.slots[2], row));
        let mut newly = [usize::MAX; 3];
        for key in self.scan(s, p, o) {
            let values = [key.0, key.1, key.2];
            let mut ok = true;
            let mut n = 0;
            for (slot, &value) in step.slots.iter().zip(&values) {
                if let Slot::Var(v) = *slot {
                    if row[v] == UNBOUND {
                        row[v] = value;
                        newly[n] = v;
                        n += 1;
                    } else if row[v] != value {
                        ok = false;
                        break;
                    }
                }
            }
            if ok && step.filters.iter().all(|flt| self.passes(flt, row)) && !self.dfs(plan, depth + 1, row, f) {
                for &v in &newly[..n] {
                    row[v] = UNBOUND;
                }
                return false;
            }
            for &v in &newly[..n] {
                row[v] = UNBOUND;
            }
        }
        true
    }

    /// Streams raw solution rows (term ids by variable slot) to `f`, which
    /// returns false to stop early. Returns the variable names by slot.
    fn run(&self, q: &Query<'_>, f: &mut dyn FnMut(&[u32]) -> bool) -> Result<Vec<String>, StoreError> {
        self.count_read();
        let plan = self.plan(q)?;
        if plan.empty {
            return Ok(plan.vars);
        }
        let mut row = plan.initial.clone();
        if plan.upfront.iter().all(|flt| self.passes(flt, &row)) {
            self.dfs(&plan, 0, &mut row, f);
        }
        Ok(plan.vars)
    }

    /// Patterns in evaluation order, each with the cardinality estimate the
    /// planner saw when it picked it.
    pub fn explain(&self, q: &Query<'_>) -> Result<Vec<(TriplePattern, f64)>, StoreError> {
        let plan = self.plan(q)?;
        let mut bound: Vec<bool> = plan.initial.iter().map(|&id| id != UNBOUND).collect();
        Ok(plan
            .order
            .iter()
            .zip(&plan.steps)
            .map(|(&p, step)| {
                let est = self.estimate(&step.slots, &bound);
                for s in &step.slots {
                    if let Slot::Var(v) = s {
                        bound[*v] = true;
                    }
                }
                (q.patterns[p].clone(), est)
            })
            .collect())
    }

    /// Natural join of the patterns over shared variables, filtered.
    pub fn bgp(&self, patterns: &[TriplePattern], filters: &[Filter]) -> Result<Vec<Solution>, StoreError> {
        self.query(&Query { patterns, filters, seed: None })
    }

    pub fn query(&self, q: &Query<'_>) -> Result<Vec<Solution>, StoreError> {
        let mut rows: Vec<Vec<u32>> = Vec::new();
        let vars = self.run(q, &mut |row| {
            rows.push(row.to_vec());
            true
        })?;
        Ok(rows
            .into_iter()
            .map(|row| {
                vars.iter()
                    .zip(row)
                    .filter(|(_, id)| *id != UNBOUND)
                    .map(|(v, id)| (v.clone(), self.term(id).clone()))
                    .collect()
            })
            .collect())
    }

    /// Evaluates and projects to a table. Projected variables must occur in a
    /// pattern, filter or the seed.
    pub fn query_table(&self, q: &Query<'_>, projection: &[String]) -> Result<Table, StoreError> {
        let mut rows: Vec<Vec<u32>> = Vec::new();
        let vars = self.run(q, &mut |row| {
            rows.push(row.to_vec());
            true
        })?;
        let cols = projection
            .iter()
            .map(|name| vars.iter().position(|v| v == name).ok_or_else(|| StoreError::UnknownVariable(name.clone())))
            .collect::<Result<Vec<usize>, _>>()?;
        let rows = rows.into_iter().map(|row| cols.iter().map(|&c| self.term(row[c]).clone()).collect()).collect();
        Ok(Table { columns: projection.to_vec(), rows })
    }
}
