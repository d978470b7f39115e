//! Embedded insert-only triple store: interned terms, SPO/POS/OSP indexes,
//! basic-graph-pattern evaluation and grouped aggregation.

mod aggregate;
mod bgp;
mod pattern;

use std::collections::BTreeSet;
use std::io::{self, BufRead, Write};
use std::ops::Bound;
use std::sync::atomic::{AtomicU64, Ordering};

use rustc_hash::FxHashMap;
use serde::Serialize;
use thiserror::Error;

use crate::model::{ntriples, ModelError, Term, Triple};

pub use aggregate::{aggregate, compare_terms, AggFunc, Aggregate, OrderKey, Table};
pub use bgp::Query;
pub use pattern::{CmpOp, Filter, Operand, PatternTerm, Solution, TriplePattern};

#[derive(Debug, Error, PartialEq)]
pub enum StoreError {
    #[error("non-numeric value bound to ?{0} under a numeric aggregate")]
    TypeMismatch(String),
    #[error("variable ?{0} does not occur in any pattern")]
    UnknownVariable(String),
    #[error("a graph pattern needs at least one triple pattern")]
    EmptyPattern,
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub(crate) type Key = (u32, u32, u32);

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StoreStats {
    pub triples: usize,
    pub terms: usize,
    pub predicates: usize,
    pub spo_entries: usize,
    pub pos_entries: usize,
    pub osp_entries: usize,
}

#[derive(Default, Clone, Copy)]
pub(crate) struct PredicateStats {
    pub count: usize,
    pub subjects: usize,
    pub objects: usize,
}

/// Single-writer store. Wrap in a lock for shared use; every mutation goes
/// through `&mut self`, so readers holding `&self` see whole batches.
#[derive(Default)]
pub struct TripleStore {
    terms: Vec<Term>,
    numeric: Vec<Option<f64>>,
    ids: FxHashMap<Term, u32>,
    spo: BTreeSet<Key>,
    pos: BTreeSet<Key>,
    osp: BTreeSet<Key>,
    log: Vec<Key>,
    predicates: FxHashMap<u32, PredicateStats>,
    subjects: usize,
    reads: AtomicU64,
}

fn range_of(set: &BTreeSet<Key>, a: u32, b: Option<u32>) -> std::collections::btree_set::Range<'_, Key> {
    match b {
        Some(b) => set.range((Bound::Included((a, b, 0)), Bound::Included((a, b, u32::MAX)))),
        None => set.range((Bound::Included((a, 0, 0)), Bound::Included((a, u32::MAX, u32::MAX)))),
    }
}

impl TripleStore {
    pub fn new() -> TripleStore {
        TripleStore::default()
    }

    fn intern(&mut self, term: &Term) -> u32 {
        if let Some(&id) = self.ids.get(term) {
            return id;
        }
        let id = u32::try_from(self.terms.len()).expect("term dictionary overflow");
        self.terms.push(term.clone());
        self.numeric.push(term.as_literal().and_then(|l| l.as_f64()));
        self.ids.insert(term.clone(), id);
        id
    }

    pub(crate) fn lookup(&self, term: &Term) -> Option<u32> {
        self.ids.get(term).copied()
    }

    pub(crate) fn term(&self, id: u32) -> &Term {
        &self.terms[id as usize]
    }

    pub(crate) fn numeric(&self, id: u32) -> Option<f64> {
        self.numeric[id as usize]
    }

    /// Appends a triple. Returns false when it was already stored.
    pub fn insert(&mut self, t: &Triple) -> bool {
        let s = self.intern(&Term::Iri(t.subject.clone()));
        let p = self.intern(&Term::Iri(t.predicate.clone()));
        let o = self.intern(&t.object);
        self.insert_ids(s, p, o)
    }

    fn insert_ids(&mut self, s: u32, p: u32, o: u32) -> bool {
        if self.spo.contains(&(s, p, o)) {
            return false;
        }
        let new_subject_for_p = range_of(&self.spo, s, Some(p)).next().is_none();
        let new_object_for_p = range_of(&self.pos, p, Some(o)).next().is_none();
        let new_subject = range_of(&self.spo, s, None).next().is_none();
        self.spo.insert((s, p, o));
        self.pos.insert((p, o, s));
        self.osp.insert((o, s, p));
        self.log.push((s, p, o));
        let stats = self.predicates.entry(p).or_default();
        stats.count += 1;
        stats.subjects += usize::from(new_subject_for_p);
        stats.objects += usize::from(new_object_for_p);
        self.subjects += usize::from(new_subject);
        true
    }

    /// Inserts many triples; returns how many were new.
    pub fn extend<'a>(&mut self, triples: impl IntoIterator<Item = &'a Triple>) -> usize {
        triples.into_iter().map(|t| usize::from(self.insert(t))).sum()
    }

    pub fn len(&self) -> usize {
        self.spo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spo.is_empty()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.count_read();
        let ids = (
            self.lookup(&Term::Iri(t.subject.clone())),
            self.lookup(&Term::Iri(t.predicate.clone())),
            self.lookup(&t.object),
        );
        match ids {
            (Some(s), Some(p), Some(o)) => self.spo.contains(&(s, p, o)),
            _ => false,
        }
    }

    /// Number of query-side reads served since creation. Ingest paths never
    /// increment it.
    pub fn read_count(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    pub(crate) fn count_read(&self) {
        self.reads.fetch_add(1, Ordering::Relaxed);
    }

    pub fn stats(&self) -> StoreStats {
        StoreStats {
            triples: self.spo.len(),
            terms: self.terms.len(),
            predicates: self.predicates.len(),
            spo_entries: self.spo.len(),
            pos_entries: self.pos.len(),
            osp_entries: self.osp.len(),
        }
    }

    pub(crate) fn predicate_stats(&self, p: u32) -> PredicateStats {
        self.predicates.get(&p).copied().unwrap_or_default()
    }

    pub(crate) fn distinct_subjects(&self) -> usize {
        self.subjects
    }

    fn decode(&self, (s, p, o): Key) -> Triple {
        let iri = |id| self.term(id).as_iri().expect("subjects and predicates are IRIs").clone();
        Triple { subject: iri(s), predicate: iri(p), object: self.term(o).clone() }
    }

    /// Triples in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = Triple> + '_ {
        self.log.iter().map(|&k| self.decode(k))
    }

    /// Candidate keys for a pattern with the given bound positions, as
    /// (s, p, o) triples.
    pub(crate) fn scan(&self, s: Option<u32>, p: Option<u32>, o: Option<u32>) -> Box<dyn Iterator<Item = Key> + '_> {
        match (s, p, o) {
            (Some(s), Some(p), Some(o)) => Box::new(self.spo.contains(&(s, p, o)).then_some((s, p, o)).into_iter()),
            (Some(s), Some(p), None) => Box::new(range_of(&self.spo, s, Some(p)).copied()),
            (Some(s), None, Some(o)) => Box::new(range_of(&self.osp, o, Some(s)).map(|&(o, s, p)| (s, p, o))),
            (Some(s), None, None) => Box::new(range_of(&self.spo, s, None).copied()),
            (None, Some(p), Some(o)) => Box::new(range_of(&self.pos, p, Some(o)).map(|&(p, o, s)| (s, p, o))),
            (None, Some(p), None) => Box::new(range_of(&self.pos, p, None).map(|&(p, o, s)| (s, p, o))),
            (None, None, Some(o)) => Box::new(range_of(&self.osp, o, None).map(|&(o, s, p)| (s, p, o))),
            (None, None, None) => Box::new(self.spo.iter().copied()),
        }
    }

    /// Solutions of a single pattern.
    pub fn match_pattern(&self, pattern: &TriplePattern) -> Vec<Solution> {
        self.bgp(std::slice::from_ref(pattern), &[]).expect("a single pattern is never empty")
    }

    /// Writes the canonical sorted dump.
    pub fn export<W: Write>(&self, out: &mut W) -> io::Result<usize> {
        let triples: Vec<Triple> = self.spo.iter().map(|&k| self.decode(k)).collect();
        ntriples::write_sorted(out, &triples)
    }

    pub fn export_string(&self) -> String {
        let mut buf = Vec::new();
        self.export(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("dump is UTF-8")
    }

    /// Loads a dump; returns the number of new triples.
    pub fn import<R: BufRead>(&mut self, input: R) -> Result<usize, StoreError> {
        let triples = ntriples::read_triples(input)?;
        Ok(self.extend(&triples))
    }
}
