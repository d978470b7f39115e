//! Ingest service: translates capture batches into graph triples using the
//! loaded specifications, links begin/end pairs and deduplicates
//! redeliveries, then appends to the store under a single writer.

mod linkage;
pub mod server;
mod translate;

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock, RwLockReadGuard};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

pub use linkage::LinkageState;
use linkage::Pairing;
pub use translate::{
    assign_value_iri, execution_class, task_iri, translate, value_class, workflow_exec_iri, SpecRegistry,
    TranslateError,
};

use crate::capture::{Batch, BatchSink, CaptureError, CaptureEvent, EventKind};
use crate::model::{SchemaVariant, Triple};
use crate::spec::{compile_prospective, parse_spec, validate, Diagnostic, SpecError, WorkflowSpec};
use crate::store::{StoreStats, TripleStore};

pub const DEFAULT_PENDING_BOUND: usize = 10_000;
/// Batches smaller than this are translated on the calling thread.
const PARALLEL_TRANSLATE_MIN: usize = 256;

/// Per-batch outcome. `accepted + duplicates + deferred + quarantined`
/// equals the batch size.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestAck {
    pub accepted: usize,
    pub duplicates: usize,
    pub deferred: usize,
    pub quarantined: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManagerStatus {
    pub triples: usize,
    pub pending_begins: usize,
    pub pending_ends: usize,
    pub quarantined: u64,
    pub duplicates: u64,
    pub accepted: u64,
    pub specs: Vec<String>,
    pub variant: SchemaVariant,
    pub store: StoreStatsDto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreStatsDto {
    pub terms: usize,
    pub predicates: usize,
    pub spo_entries: usize,
    pub pos_entries: usize,
    pub osp_entries: usize,
}

impl From<StoreStats> for StoreStatsDto {
    fn from(s: StoreStats) -> Self {
        StoreStatsDto {
            terms: s.terms,
            predicates: s.predicates,
            spo_entries: s.spo_entries,
            pos_entries: s.pos_entries,
            osp_entries: s.osp_entries,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeadLetter {
    pub client: String,
    pub reason: String,
    pub event: CaptureEvent,
}

#[derive(Clone, Debug)]
pub struct ManagerConfig {
    pub variant: SchemaVariant,
    pub pending_bound: usize,
    /// JSON-lines file receiving quarantined events.
    pub dead_letter_path: Option<PathBuf>,
}

impl Default for ManagerConfig {
    fn default() -> Self {
        ManagerConfig {
            variant: SchemaVariant::WithProvMl,
            pending_bound: DEFAULT_PENDING_BOUND,
            dead_letter_path: None,
        }
    }
}

pub struct Manager {
    config: ManagerConfig,
    registry: RwLock<Arc<SpecRegistry>>,
    store: RwLock<TripleStore>,
    linkage: LinkageState,
    dead_letters: Mutex<Vec<DeadLetter>>,
    accepted: AtomicU64,
    duplicates: AtomicU64,
    quarantined: AtomicU64,
}

impl Manager {
    pub fn new(config: ManagerConfig) -> Manager {
        Manager {
            linkage: LinkageState::new(config.pending_bound),
            config,
            registry: RwLock::new(Arc::new(SpecRegistry::new())),
            store: RwLock::new(TripleStore::new()),
            dead_letters: Mutex::new(Vec::new()),
            accepted: AtomicU64::new(0),
            duplicates: AtomicU64::new(0),
            quarantined: AtomicU64::new(0),
        }
    }

    pub fn with_variant(variant: SchemaVariant) -> Manager {
        Manager::new(ManagerConfig { variant, ..ManagerConfig::default() })
    }

    pub fn variant(&self) -> SchemaVariant {
        self.config.variant
    }

    /// Validates and registers a specification and appends its prospective
    /// triples. Returns warnings.
    pub fn load_spec(&self, spec: WorkflowSpec) -> Result<Vec<Diagnostic>, SpecError> {
        let triples = compile_prospective(&spec, self.config.variant)?;
        let warnings = validate(&spec);
        {
            let mut store = self.store.write();
            store.extend(&triples);
        }
        let mut registry = self.registry.write();
        let mut next = (**registry).clone();
        next.insert(spec);
        *registry = Arc::new(next);
        Ok(warnings)
    }

    pub fn load_spec_text(&self, text: &str) -> Result<Vec<Diagnostic>, SpecError> {
        self.load_spec(parse_spec(text)?)
    }

    pub fn registry(&self) -> Arc<SpecRegistry> {
        self.registry.read().clone()
    }

    fn quarantine(&self, client: &str, reason: String, event: CaptureEvent) {
        warn!(client, %reason, seq = event.seq, "event quarantined");
        self.quarantined.fetch_add(1, Ordering::Relaxed);
        let letter = DeadLetter { client: client.to_string(), reason, event };
        if let Some(path) = &self.config.dead_letter_path {
            let written = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .and_then(|mut f| writeln!(f, "{}", serde_json::to_string(&letter).unwrap_or_default()));
            if let Err(e) = written {
                warn!(path = %path.display(), error = %e, "dead-letter log not writable");
            }
        }
        self.dead_letters.lock().push(letter);
    }

    /// Processes one batch. Large batches are translated in parallel; the resulting
    /// triples are appended under the store's write lock before returning.
    /// The store is never read here.
    pub fn ingest_batch(&self, batch: &Batch) -> IngestAck {
        let registry = self.registry();
        let variant = self.config.variant;
        let mut ack = IngestAck::default();

        let fresh: Vec<&CaptureEvent> = batch
            .events
            .iter()
            .filter(|e| {
                let first = self.linkage.first_delivery(&batch.client, e.seq);
                if !first {
                    ack.duplicates += 1;
                }
                first
            })
            .collect();

        let one = |e: &&CaptureEvent| translate(e, &registry, variant);
        let translated: Vec<Result<Vec<Triple>, TranslateError>> = if fresh.len() >= PARALLEL_TRANSLATE_MIN {
            fresh.par_iter().map(one).collect()
        } else {
            fresh.iter().map(one).collect()
        };

        let mut append: Vec<Triple> = Vec::new();
        for (event, result) in fresh.into_iter().zip(translated) {
            let triples = match result {
                Ok(t) => t,
                Err(err) => {
                    self.linkage.forget_delivery(&batch.client, event.seq);
                    self.quarantine(&batch.client, err.to_string(), event.clone());
                    ack.quarantined += 1;
                    continue;
                }
            };
            match event.kind {
                EventKind::TaskBegin => {
                    append.extend(self.linkage.begin(&event.task, triples));
                    ack.accepted += 1;
                }
                EventKind::TaskEnd => match self.linkage.end(&batch.client, event, triples) {
                    Pairing::Emit(t) => {
                        append.extend(t);
                        ack.accepted += 1;
                    }
                    Pairing::Deferred => ack.deferred += 1,
                },
                EventKind::WorkflowBegin | EventKind::WorkflowEnd => {
                    append.extend(triples);
                    ack.accepted += 1;
                }
            }
        }
        for (client, event) in self.linkage.evict_overflow() {
            self.quarantine(&client, "pending end buffer overflow".into(), event);
        }

        if !append.is_empty() {
            let mut store = self.store.write();
            store.extend(&append);
        }
        self.accepted.fetch_add(ack.accepted as u64, Ordering::Relaxed);
        self.duplicates.fetch_add(ack.duplicates as u64, Ordering::Relaxed);
        ack
    }

    /// Offline replay of a provlog: the events are ingested in file order as
    /// batches of `batch_size` from `client`.
    pub fn replay(&self, client: &str, events: Vec<CaptureEvent>, batch_size: usize) -> IngestAck {
        let mut total = IngestAck::default();
        for chunk in events.chunks(batch_size.max(1)) {
            let ack = self.ingest_batch(&Batch {
                client: client.to_string(),
                flush_reason: crate::capture::FlushReason::ExplicitFlush,
                events: chunk.to_vec(),
            });
            total.accepted += ack.accepted;
            total.duplicates += ack.duplicates;
            total.deferred += ack.deferred;
            total.quarantined += ack.quarantined;
        }
        total
    }

    /// Read access for queries; concurrent with other readers.
    pub fn store(&self) -> RwLockReadGuard<'_, TripleStore> {
        self.store.read()
    }

    /// Bulk-loads a dump, bypassing translation.
    pub fn import(&self, text: &str) -> Result<usize, crate::store::StoreError> {
        self.store.write().import(text.as_bytes())
    }

    pub fn export_string(&self) -> String {
        self.store.read().export_string()
    }

    pub fn dead_letters(&self) -> Vec<DeadLetter> {
        self.dead_letters.lock().clone()
    }

    pub fn status(&self) -> ManagerStatus {
        let store = self.store.read();
        ManagerStatus {
            triples: store.len(),
            pending_begins: self.linkage.pending_begins(),
            pending_ends: self.linkage.pending_ends(),
            quarantined: self.quarantined.load(Ordering::Relaxed),
            duplicates: self.duplicates.load(Ordering::Relaxed),
            accepted: self.accepted.load(Ordering::Relaxed),
            specs: self.registry().names().map(str::to_string).collect(),
            variant: self.config.variant,
            store: store.stats().into(),
        }
    }
}

/// In-process delivery, for runs without the HTTP service.
impl BatchSink for Manager {
    fn send(&self, batch: &Batch) -> Result<(), CaptureError> {
        self.ingest_batch(batch);
        Ok(())
    }
}
