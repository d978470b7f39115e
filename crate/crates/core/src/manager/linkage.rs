use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};

use dashmap::mapref::entry::Entry;
use dashmap::{DashMap, DashSet};
use parking_lot::Mutex;

use crate::capture::CaptureEvent;
use crate::model::Triple;

/// A task seen from one side only.
pub enum Pending {
    /// Begin delivered, end still outstanding.
    Begin,
    /// End delivered first; its triples wait for the begin.
    End { client: String, event: Box<CaptureEvent>, triples: Vec<Triple> },
}

/// What the caller should do with a task event after pairing.
pub enum Pairing {
    /// Append these triples now.
    Emit(Vec<Triple>),
    /// The end was buffered until its begin arrives.
    Deferred,
}

/// Concurrent key-value state shared by ingest requests.
pub struct LinkageState {
    tasks: DashMap<String, Pending>,
    end_order: Mutex<VecDeque<String>>,
    pending_ends: AtomicUsize,
    dedup: DashSet<(String, u64)>,
    bound: usize,
}

impl LinkageState {
    pub fn new(bound: usize) -> LinkageState {
        LinkageState {
            tasks: DashMap::new(),
            end_order: Mutex::new(VecDeque::new()),
            pending_ends: AtomicUsize::new(0),
            dedup: DashSet::new(),
            bound: bound.max(1),
        }
    }

    /// Marks (client, seq) as seen; false if it already was.
    pub fn first_delivery(&self, client: &str, seq: u64) -> bool {
        self.dedup.insert((client.to_string(), seq))
    }

    /// Forgets a delivery so a later redelivery is processed again.
    pub fn forget_delivery(&self, client: &str, seq: u64) {
        self.dedup.remove(&(client.to_string(), seq));
    }

    pub fn begin(&self, task: &str, mut triples: Vec<Triple>) -> Vec<Triple> {
        match self.tasks.entry(task.to_string()) {
            Entry::Occupied(slot) => {
                if matches!(slot.get(), Pending::End { .. }) {
                    if let (_, Pending::End { triples: buffered, .. }) = slot.remove_entry() {
                        self.pending_ends.fetch_sub(1, Ordering::Relaxed);
                        triples.extend(buffered);
                    }
                }
            }
            Entry::Vacant(slot) => {
                slot.insert(Pending::Begin);
            }
        }
        triples
    }

    pub fn end(&self, client: &str, event: &CaptureEvent, triples: Vec<Triple>) -> Pairing {
        match self.tasks.entry(event.task.clone()) {
            Entry::Occupied(slot) => {
                if matches!(slot.get(), Pending::Begin) {
                    slot.remove();
                    Pairing::Emit(triples)
                } else {
                    // A second end for a still-buffered task: nothing new.
                    Pairing::Emit(Vec::new())
                }
            }
            Entry::Vacant(slot) => {
                slot.insert(Pending::End { client: client.to_string(), event: Box::new(event.clone()), triples });
                self.pending_ends.fetch_add(1, Ordering::Relaxed);
                self.end_order.lock().push_back(event.task.clone());
                Pairing::Deferred
            }
        }
    }

    /// Drops the oldest buffered ends beyond the bound and returns them with
    /// their client. Their deliveries are forgotten so they can be resent.
    pub fn evict_overflow(&self) -> Vec<(String, CaptureEvent)> {
        let mut evicted = Vec::new();
        let mut order = self.end_order.lock();
        while self.pending_ends.load(Ordering::Relaxed) > self.bound {
            let Some(task) = order.pop_front() else { break };
            if let Some((_, Pending::End { client, event, .. })) =
                self.tasks.remove_if(&task, |_, p| matches!(p, Pending::End { .. }))
            {
                self.pending_ends.fetch_sub(1, Ordering::Relaxed);
                self.forget_delivery(&client, event.seq);
                evicted.push((client, *event));
            }
        }
        evicted
    }

    pub fn pending_begins(&self) -> usize {
        self.tasks.len() - self.pending_ends()
    }

    pub fn pending_ends(&self) -> usize {
        self.pending_ends.load(Ordering::Relaxed)
    }
}
