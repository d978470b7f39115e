//! Turning a planted lifecycle into a graph: a loaded store for queries, or
//! a streaming count for full-scale manifests.

use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use super::specs::{lifecycle_specs, stage_dts, stages};
use super::{Lifecycle, SynthError, SyntheticParams};
use crate::manager::{translate, SpecRegistry};
use crate::model::{Iri, RelationId, SchemaVariant, Term, Triple};
use crate::spec::{attribute_iri, compile_prospective, transformation_iri, Direction};
use crate::store::TripleStore;

/// Exact counts of a generated graph, by kind.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub variant: Option<SchemaVariant>,
    pub params: Option<SyntheticParams>,
    pub epochs: usize,
    pub batches: usize,
    pub events: u64,
    pub triples: u64,
    pub by_predicate: BTreeMap<String, u64>,
    /// `rdf:type` triples per class.
    pub by_class: BTreeMap<String, u64>,
    /// Executions per prospective transformation (`prov:wasInfluencedBy`).
    pub executions: BTreeMap<String, u64>,
    /// Distinct value nodes per prospective attribute (`prov:wasDerivedFrom`).
    pub values: BTreeMap<String, u64>,
}

impl Manifest {
    fn record(&mut self, t: &Triple) {
        self.triples += 1;
        *self.by_predicate.entry(t.predicate.to_string()).or_default() += 1;
        let object = match &t.object {
            Term::Iri(iri) => iri.to_string(),
            Term::Literal(_) => return,
        };
        if t.predicate == RelationId::Type.iri() {
            *self.by_class.entry(object).or_default() += 1;
        } else if t.predicate == RelationId::WasInfluencedBy.iri() && t.subject.local().starts_with("t.") {
            *self.executions.entry(object).or_default() += 1;
        } else if t.predicate == RelationId::WasDerivedFrom.iri() && t.subject.local().starts_with("v.") {
            *self.values.entry(object).or_default() += 1;
        }
    }

    pub fn executions_of(&self, iri: &Iri) -> u64 {
        self.executions.get(&iri.to_string()).copied().unwrap_or(0)
    }

    pub fn values_of(&self, iri: &Iri) -> u64 {
        self.values.get(&iri.to_string()).copied().unwrap_or(0)
    }

    /// Model value nodes: one per training epoch.
    pub fn model_nodes(&self) -> u64 {
        self.values_of(&attribute_iri("learning", "training_epoch", Direction::Out, "model"))
    }

    /// Batch-section executions over all stages.
    pub fn batch_executions(&self) -> u64 {
        let n_stages = self.params.as_ref().map_or(3, |p| p.n_stages);
        stages(n_stages).into_iter().map(|k| self.executions_of(&transformation_iri("learning", &stage_dts(k).2))).sum()
    }

    /// Checks the closed forms; returns the failed ones.
    pub fn structural_violations(&self) -> Vec<String> {
        let Some(p) = &self.params else { return vec!["manifest has no parameters".into()] };
        let (w, s, e, b) = (p.n_workflows as u64, p.n_stages as u64, self.epochs as u64, self.batches as u64);
        let mut out = Vec::new();
        let mut check = |what: &str, got: u64, want: u64| {
            if got != want {
                out.push(format!("{what}: {got} != {want}"));
            }
        };
        check("model nodes", self.model_nodes(), w * e);
        check("batch-section executions", self.batch_executions(), w * s * e * b);
        check("training executions", self.executions_of(&transformation_iri("learning", "training")), w);
        out
    }
}

/// Receives every triple of a generated dataset once.
pub trait TripleSink {
    fn accept(&mut self, t: &Triple);
}

impl TripleSink for TripleStore {
    fn accept(&mut self, t: &Triple) {
        self.insert(t);
    }
}

/// Counts distinct triples without keeping them; a 128-bit fingerprint set
/// stands in for the graph.
#[derive(Default)]
pub struct CountingSink {
    seen: FxHashSet<u128>,
    pub manifest: Manifest,
}

fn fingerprint(t: &Triple) -> u128 {
    let mut a = std::collections::hash_map::DefaultHasher::new();
    0u8.hash(&mut a);
    t.hash(&mut a);
    let mut b = std::collections::hash_map::DefaultHasher::new();
    1u8.hash(&mut b);
    t.hash(&mut b);
    ((a.finish() as u128) << 64) | b.finish() as u128
}

impl TripleSink for CountingSink {
    fn accept(&mut self, t: &Triple) {
        if self.seen.insert(fingerprint(t)) {
            self.manifest.record(t);
        }
    }
}

/// Manifest-tracking wrapper around a store.
pub struct StoreSink<'a> {
    pub store: &'a mut TripleStore,
    pub manifest: Manifest,
}

impl TripleSink for StoreSink<'_> {
    fn accept(&mut self, t: &Triple) {
        if self.store.insert(t) {
            self.manifest.record(t);
        }
    }
}

pub fn registry_for(params: &SyntheticParams) -> SpecRegistry {
    let mut r = SpecRegistry::new();
    for spec in lifecycle_specs(params) {
        r.insert(spec);
    }
    r
}

/// Streams the prospective, domain and retrospective triples of a lifecycle
/// into `sink`. Events are translated exactly as the manager would; the
/// generator emits begins before ends so no pairing state is needed.
/// Returns the number of events.
pub fn generate_into(life: &Lifecycle, variant: SchemaVariant, sink: &mut impl TripleSink) -> Result<u64, SynthError> {
    life.params.validate()?;
    let specs = lifecycle_specs(&life.params);
    for spec in &specs {
        for t in compile_prospective(spec, variant)? {
            sink.accept(&t);
        }
    }
    for t in life.domain_triples() {
        sink.accept(&t);
    }
    let registry = registry_for(&life.params);
    let mut events = 0u64;
    let mut failure = None;
    life.for_each_event(|e| {
        events += 1;
        match translate(&e, &registry, variant) {
            Ok(ts) => ts.iter().for_each(|t| sink.accept(t)),
            Err(err) => {
                failure.get_or_insert(err);
            }
        }
    });
    match failure {
        Some(err) => Err(SynthError::Translate(err)),
        None => Ok(events),
    }
}

fn finish(mut m: Manifest, life: &Lifecycle, variant: SchemaVariant, events: u64) -> Manifest {
    m.variant = Some(variant);
    m.params = Some(life.params.clone());
    m.epochs = life.params.epochs();
    m.batches = life.params.batches();
    m.events = events;
    m
}

/// Loads a lifecycle into a fresh store.
pub fn generate_store(life: &Lifecycle, variant: SchemaVariant) -> Result<(TripleStore, Manifest), SynthError> {
    let mut store = TripleStore::new();
    let mut sink = StoreSink { store: &mut store, manifest: Manifest::default() };
    let events = generate_into(life, variant, &mut sink)?;
    let manifest = finish(sink.manifest, life, variant, events);
    Ok((store, manifest))
}

/// Manifest only, without materializing the graph.
pub fn count_dataset(life: &Lifecycle, variant: SchemaVariant) -> Result<Manifest, SynthError> {
    let mut sink = CountingSink::default();
    let events = generate_into(life, variant, &mut sink)?;
    Ok(finish(sink.manifest, life, variant, events))
}
