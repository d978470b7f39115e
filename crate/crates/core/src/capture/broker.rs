use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use tracing::warn;

use super::sink::BatchSink;
use super::{Batch, CaptureError};

struct Queues {
    per_client: BTreeMap<String, VecDeque<(u64, Batch)>>,
    next_id: u64,
    /// Client served last, for round-robin across clients.
    cursor: Option<String>,
    spool: Option<BufWriter<File>>,
}

impl Queues {
    fn log(&mut self, line: &str) -> Result<(), CaptureError> {
        if let Some(spool) = &mut self.spool {
            spool.write_all(line.as_bytes())?;
            spool.write_all(b"\n")?;
            spool.flush()?;
        }
        Ok(())
    }

    fn pending(&self) -> usize {
        self.per_client.values().map(VecDeque::len).sum()
    }
}

/// Per-client FIFO of batches backed by an append-only spool of
/// `enq <id> <batch json>` and `ack <id>` lines. Reopening replays the spool.
pub struct Broker {
    queues: Mutex<Queues>,
    ready: Condvar,
    path: Option<PathBuf>,
}

impl Broker {
    /// Broker without a spool file.
    pub fn in_memory() -> Broker {
        Broker {
            queues: Mutex::new(Queues { per_client: BTreeMap::new(), next_id: 1, cursor: None, spool: None }),
            ready: Condvar::new(),
            path: None,
        }
    }

    /// Opens or creates the spool, restoring unacknowledged batches. The
    /// spool is rewritten with only those.
    pub fn open(path: &Path) -> Result<Broker, CaptureError> {
        let mut entries: BTreeMap<u64, Batch> = BTreeMap::new();
        let mut acked: BTreeSet<u64> = BTreeSet::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                let bad = |m: &str| CaptureError::Provlog { line: i + 1, message: m.to_string() };
                let mut parts = line.splitn(3, ' ');
                match (parts.next(), parts.next(), parts.next()) {
                    (Some("enq"), Some(id), Some(json)) => {
                        let id = id.parse().map_err(|_| bad("bad id"))?;
                        let batch = serde_json::from_str(json).map_err(|e| bad(&e.to_string()))?;
                        entries.insert(id, batch);
                    }
                    (Some("ack"), Some(id), None) => {
                        acked.insert(id.parse().map_err(|_| bad("bad id"))?);
                    }
                    (Some(""), None, None) => {}
                    // A torn final line from a crash mid-write.
                    _ => warn!(line = i + 1, "unreadable spool line skipped"),
                }
            }
        }
        let next_id = entries.keys().chain(acked.iter()).max().map_or(1, |m| m + 1);
        let mut per_client: BTreeMap<String, VecDeque<(u64, Batch)>> = BTreeMap::new();
        let tmp = path.with_extension("spool.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            for (id, batch) in entries.into_iter().filter(|(id, _)| !acked.contains(id)) {
                writeln!(w, "enq {id} {}", serde_json::to_string(&batch)?)?;
                per_client.entry(batch.client.clone()).or_default().push_back((id, batch));
            }
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        let spool = BufWriter::new(OpenOptions::new().append(true).open(path)?);
        Ok(Broker {
            queues: Mutex::new(Queues { per_client, next_id, cursor: None, spool: Some(spool) }),
            ready: Condvar::new(),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn spool_path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn enqueue(&self, batch: Batch) -> Result<u64, CaptureError> {
        let mut q = self.queues.lock();
        let id = q.next_id;
        q.next_id += 1;
        q.log(&format!("enq {id} {}", serde_json::to_string(&batch)?))?;
        q.per_client.entry(batch.client.clone()).or_default().push_back((id, batch));
        drop(q);
        self.ready.notify_all();
        Ok(id)
    }

    /// Oldest batch of the next client in round-robin order. The batch stays
    /// queued until [`Broker::ack`].
    pub fn peek(&self) -> Option<(u64, Batch)> {
        let mut q = self.queues.lock();
        let clients: Vec<&String> = q.per_client.iter().filter(|(_, v)| !v.is_empty()).map(|(k, _)| k).collect();
        let pick = match &q.cursor {
            Some(cur) => clients.iter().find(|c| c.as_str() > cur.as_str()).or(clients.first()),
            None => clients.first(),
        }
        .map(|c| (*c).clone())?;
        let front = q.per_client[&pick].front().cloned();
        q.cursor = Some(pick);
        front
    }

    /// Like [`Broker::peek`] but waits up to `timeout` for a batch.
    pub fn peek_wait(&self, timeout: Duration) -> Option<(u64, Batch)> {
        if let Some(b) = self.peek() {
            return Some(b);
        }
        let mut q = self.queues.lock();
        if q.pending() == 0 {
            self.ready.wait_for(&mut q, timeout);
        }
        drop(q);
        self.peek()
    }

    /// Removes a delivered batch.
    pub fn ack(&self, id: u64) -> Result<(), CaptureError> {
        let mut q = self.queues.lock();
        let mut found = false;
        for queue in q.per_client.values_mut() {
            if queue.front().is_some_and(|(i, _)| *i == id) {
                queue.pop_front();
                found = true;
                break;
            }
        }
        if found {
            q.log(&format!("ack {id}"))?;
        }
        Ok(())
    }

    /// Removes and returns the next batch (peek + ack).
    pub fn dequeue(&self) -> Option<Batch> {
        let (id, batch) = self.peek()?;
        if let Err(e) = self.ack(id) {
            warn!(error = %e, "spool ack failed");
        }
        Some(batch)
    }

    pub fn len(&self) -> usize {
        self.queues.lock().pending()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl BatchSink for Broker {
    fn send(&self, batch: &Batch) -> Result<(), CaptureError> {
        self.enqueue(batch.clone()).map(|_| ())
    }
}

/// Forwards broker batches to a sink, acknowledging only successful sends.
/// Failed sends are retried with exponential backoff, keeping per-client
/// order.
pub struct Consumer {
    stop: Arc<AtomicBool>,
    worker: Option<JoinHandle<()>>,
}

pub const CONSUMER_BACKOFF_START: Duration = Duration::from_millis(100);
pub const CONSUMER_BACKOFF_MAX: Duration = Duration::from_secs(2);

impl Consumer {
    pub fn spawn(broker: Arc<Broker>, sink: Arc<dyn BatchSink>) -> Consumer {
        Consumer::spawn_with_backoff(broker, sink, CONSUMER_BACKOFF_START)
    }

    pub fn spawn_with_backoff(broker: Arc<Broker>, sink: Arc<dyn BatchSink>, initial: Duration) -> Consumer {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let worker = std::thread::spawn(move || {
            let mut backoff = initial;
            while !flag.load(Ordering::Acquire) {
                let Some((id, batch)) = broker.peek_wait(Duration::from_millis(50)) else { continue };
                match sink.send(&batch) {
                    Ok(()) => {
                        backoff = initial;
                        if let Err(e) = broker.ack(id) {
                            warn!(error = %e, "spool ack failed");
                        }
                    }
                    Err(e) => {
                        warn!(id, error = %e, "forwarding failed; batch kept in spool");
                        std::thread::sleep(backoff);
                        backoff = (backoff * 2).min(CONSUMER_BACKOFF_MAX);
                    }
                }
            }
        });
        Consumer { stop, worker: Some(worker) }
    }

    /// Waits until the broker is empty or the timeout elapses.
    pub fn drain(broker: &Broker, timeout: Duration) -> bool {
        let deadline = std::time::Instant::now() + timeout;
        while !broker.is_empty() {
            if std::time::Instant::now() >= deadline {
                return false;
            }
            std::thread::sleep(Duration::from_millis(5));
        }
        true
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for Consumer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::sink::MemorySink;
    use crate::capture::{CaptureEvent, EventKind, FlushReason, Values};

    fn batch(client: &str, seq: u64) -> Batch {
        Batch {
            client: client.into(),
            flush_reason: FlushReason::ExplicitFlush,
            events: vec![CaptureEvent {
                kind: EventKind::WorkflowEnd,
                wf: "w.1".into(),
                dt: String::new(),
                task: String::new(),
                parent: None,
                values: Values::new(),
                t: 0,
                seq,
            }],
        }
    }

    /// Fails until switched on.
    struct Switch {
        up: AtomicBool,
        inner: MemorySink,
    }

    impl BatchSink for Switch {
        fn send(&self, b: &Batch) -> Result<(), CaptureError> {
            if self.up.load(Ordering::Acquire) {
                self.inner.send(b)
            } else {
                Err(CaptureError::Dispatch("down".into()))
            }
        }
    }

    #[test]
    fn enqueue_dequeue_same_batch() {
        let b = Broker::in_memory();
        b.enqueue(batch("a", 1)).unwrap();
        assert_eq!(b.dequeue(), Some(batch("a", 1)));
        assert!(b.dequeue().is_none());
    }

    #[test]
    fn per_client_order_with_interleaving() {
        let b = Broker::in_memory();
        for (c, s) in [("a", 1), ("b", 1), ("a", 2), ("b", 2), ("a", 3)] {
            b.enqueue(batch(c, s)).unwrap();
        }
        let mut seen: BTreeMap<String, Vec<u64>> = BTreeMap::new();
        while let Some(x) = b.dequeue() {
            seen.entry(x.client.clone()).or_default().push(x.events[0].seq);
        }
        assert_eq!(seen["a"], vec![1, 2, 3]);
        assert_eq!(seen["b"], vec![1, 2]);
    }

    #[test]
    fn spool_replay_keeps_unacked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broker.spool");
        {
            let b = Broker::open(&path).unwrap();
            b.enqueue(batch("a", 1)).unwrap();
            b.enqueue(batch("a", 2)).unwrap();
            b.enqueue(batch("a", 3)).unwrap();
            assert_eq!(b.dequeue(), Some(batch("a", 1)));
        }
        let b = Broker::open(&path).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.dequeue(), Some(batch("a", 2)));
        let id = b.enqueue(batch("a", 4)).unwrap();
        assert!(id > 3);
        assert_eq!(b.dequeue(), Some(batch("a", 3)));
        assert_eq!(b.dequeue(), Some(batch("a", 4)));
    }

    #[test]
    fn manager_down_then_up_delivers_in_order() {
        let broker = Arc::new(Broker::in_memory());
        let sink = Arc::new(Switch { up: AtomicBool::new(false), inner: MemorySink::new() });
        let consumer = Consumer::spawn_with_backoff(broker.clone(), sink.clone(), Duration::from_millis(5));
        broker.enqueue(batch("a", 1)).unwrap();
        broker.enqueue(batch("a", 2)).unwrap();
        std::thread::sleep(Duration::from_millis(40));
        assert_eq!(broker.len(), 2);
        sink.up.store(true, Ordering::Release);
        assert!(Consumer::drain(&broker, Duration::from_secs(5)));
        consumer.stop();
        let got: Vec<u64> = sink.inner.batches().iter().map(|b| b.events[0].seq).collect();
        assert_eq!(got, vec![1, 2]);
    }
}
