use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use crossbeam_channel::{Receiver, Sender, TrySendError};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tracing::warn;

use super::sink::{BatchSink, HttpSink};
use super::{Batch, CaptureConfig, CaptureError, CaptureEvent, EventKind, FlushReason, Values};
use crate::spec::EnvironmentSpec;

/// Bounded retry for online dispatch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, initial_backoff: Duration::from_millis(100) }
    }
}

/// Batches the dispatcher may hold before the host side stops handing more.
pub const DEFAULT_BACKLOG: usize = 1024;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureStats {
    pub events: u64,
    pub batches: u64,
    pub delivered_batches: u64,
    pub undelivered_batches: u64,
    pub dropped_events: u64,
}

#[derive(Default)]
struct Counters {
    events: AtomicU64,
    batches: AtomicU64,
    delivered: AtomicU64,
    undelivered: AtomicU64,
    dropped: AtomicU64,
    overflows: AtomicU64,
}

struct DiskLog {
    log: BufWriter<File>,
    undelivered_path: std::path::PathBuf,
}

impl DiskLog {
    fn append(&mut self, batch: &Batch) -> std::io::Result<()> {
        for e in &batch.events {
            serde_json::to_writer(&mut self.log, e)?;
            self.log.write_all(b"\n")?;
        }
        self.log.flush()
    }

    fn mark_undelivered(&self, batch: &Batch) -> std::io::Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(&self.undelivered_path)?;
        writeln!(f, "{}", serde_json::to_string(batch)?)
    }
}

struct Shared {
    config: CaptureConfig,
    sink: Option<Arc<dyn BatchSink>>,
    retry: RetryPolicy,
    disk: Option<Mutex<DiskLog>>,
    counters: Counters,
}

impl Shared {
    fn persist(&self, batch: &Batch) {
        if let Some(disk) = &self.disk {
            if let Err(e) = disk.lock().append(batch) {
                warn!(error = %e, "provlog write failed");
            }
        }
    }

    fn deliver(&self, batch: &Batch) {
        let Some(sink) = &self.sink else { return };
        let mut backoff = self.retry.initial_backoff;
        for attempt in 1..=self.retry.attempts.max(1) {
            match sink.send(batch) {
                Ok(()) => {
                    self.counters.delivered.fetch_add(1, Ordering::Relaxed);
                    return;
                }
                Err(e) => {
                    warn!(client = %batch.client, attempt, error = %e, "batch dispatch failed");
                    if attempt < self.retry.attempts {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        self.give_up(batch);
    }

    fn give_up(&self, batch: &Batch) {
        match &self.disk {
            Some(disk) => {
                self.counters.undelivered.fetch_add(1, Ordering::Relaxed);
                if let Err(e) = disk.lock().mark_undelivered(batch) {
                    warn!(error = %e, "undelivered marker write failed");
                }
            }
            None => {
                self.counters.dropped.fetch_add(batch.events.len() as u64, Ordering::Relaxed);
            }
        }
    }

    fn handle(&self, batch: &Batch) {
        self.persist(batch);
        self.deliver(batch);
    }
}

struct Inner {
    queue: Vec<CaptureEvent>,
    seq: u64,
    open: HashSet<String>,
    tx: Option<Sender<Batch>>,
}

/// A started task; pass it back to [`CaptureClient::task_end`].
#[derive(Clone, Debug)]
pub struct TaskHandle {
    pub wf: String,
    pub dt: String,
    pub task: String,
    ended: Arc<AtomicBool>,
}

/// Asynchronous batching capture client. Calls never fail and never wait
/// on the manager: batches go to a dispatcher thread that writes the disk
/// log and forwards to the sink.
pub struct CaptureClient {
    shared: Arc<Shared>,
    inner: Mutex<Inner>,
    worker: Mutex<Option<JoinHandle<()>>>,
}

pub fn now_micros() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_micros() as i64)
}

fn dispatcher(shared: Arc<Shared>, rx: Receiver<Batch>) {
    for batch in rx {
        shared.handle(&batch);
    }
}

impl CaptureClient {
    /// Client forwarding over HTTP when online.
    pub fn new(config: CaptureConfig) -> Result<CaptureClient, CaptureError> {
        let sink: Option<Arc<dyn BatchSink>> = match (&config.online, &config.manager_endpoint) {
            (true, Some(ep)) => Some(Arc::new(HttpSink::new(ep))),
            _ => None,
        };
        CaptureClient::build(config, sink, RetryPolicy::default(), DEFAULT_BACKLOG)
    }

    /// Client forwarding to an arbitrary sink when online.
    pub fn with_sink(config: CaptureConfig, sink: Arc<dyn BatchSink>) -> Result<CaptureClient, CaptureError> {
        CaptureClient::build(config, Some(sink), RetryPolicy::default(), DEFAULT_BACKLOG)
    }

    pub fn build(
        config: CaptureConfig,
        sink: Option<Arc<dyn BatchSink>>,
        retry: RetryPolicy,
        backlog: usize,
    ) -> Result<CaptureClient, CaptureError> {
        config.validate()?;
        let disk = match (config.diskful, config.provlog_file(), config.undelivered_file()) {
            (true, Some(path), Some(undelivered_path)) => {
                if let Some(dir) = path.parent() {
                    std::fs::create_dir_all(dir)?;
                }
                let file = OpenOptions::new().create(true).append(true).open(&path)?;
                Some(Mutex::new(DiskLog { log: BufWriter::new(file), undelivered_path }))
            }
            _ => None,
        };
        let sink = if config.online { sink } else { None };
        let shared = Arc::new(Shared { config, sink, retry, disk, counters: Counters::default() });
        let (tx, rx) = crossbeam_channel::bounded(backlog.max(1));
        let worker = {
            let shared = shared.clone();
            std::thread::Builder::new().name("capture-dispatch".into()).spawn(move || dispatcher(shared, rx))?
        };
        Ok(CaptureClient {
            shared,
            inner: Mutex::new(Inner { queue: Vec::new(), seq: 0, open: HashSet::new(), tx: Some(tx) }),
            worker: Mutex::new(Some(worker)),
        })
    }

    pub fn config(&self) -> &CaptureConfig {
        &self.shared.config
    }

    pub fn stats(&self) -> CaptureStats {
        let c = &self.shared.counters;
        CaptureStats {
            events: c.events.load(Ordering::Relaxed),
            batches: c.batches.load(Ordering::Relaxed),
            delivered_batches: c.delivered.load(Ordering::Relaxed),
            undelivered_batches: c.undelivered.load(Ordering::Relaxed),
            dropped_events: c.dropped.load(Ordering::Relaxed),
        }
    }

    fn hand_off(&self, inner: &mut Inner, reason: FlushReason) {
        if inner.queue.is_empty() {
            return;
        }
        let batch = Batch {
            client: self.shared.config.client_id.clone(),
            flush_reason: reason,
            events: std::mem::take(&mut inner.queue),
        };
        self.shared.counters.batches.fetch_add(1, Ordering::Relaxed);
        let Some(tx) = &inner.tx else {
            warn!("capture client closed; handling batch inline");
            self.shared.persist(&batch);
            self.shared.give_up(&batch);
            return;
        };
        match tx.try_send(batch) {
            Ok(()) => {}
            Err(TrySendError::Full(batch)) | Err(TrySendError::Disconnected(batch)) => {
                // Backlog exhausted: keep it on disk if we can, otherwise drop.
                if self.shared.counters.overflows.fetch_add(1, Ordering::Relaxed) == 0 {
                    warn!(events = batch.events.len(), "dispatch backlog full; later overflows are only counted");
                }
                self.shared.persist(&batch);
                self.shared.give_up(&batch);
            }
        }
    }

    fn push(&self, kind: EventKind, wf: &str, dt: &str, task: &str, parent: Option<&str>, values: Values) {
        let t = now_micros();
        let mut inner = self.inner.lock();
        inner.seq += 1;
        let event = CaptureEvent {
            kind,
            wf: wf.to_string(),
            dt: dt.to_string(),
            task: task.to_string(),
            parent: parent.map(str::to_string),
            values,
            t,
            seq: inner.seq,
        };
        inner.queue.push(event);
        self.shared.counters.events.fetch_add(1, Ordering::Relaxed);
        if inner.queue.len() >= self.shared.config.queue_size {
            self.hand_off(&mut inner, FlushReason::QueueFull);
        }
    }

    /// Starts a workflow execution; returns its `<spec>.<hex>` id.
    pub fn workflow_begin(&self, spec_name: &str, env: Option<&EnvironmentSpec>) -> String {
        let wf = format!("{spec_name}.{}", uuid::Uuid::new_v4().simple());
        let mut values = Values::new();
        if let Some(env) = env {
            values.insert("cluster".into(), env.cluster_name.clone().into());
            if !env.node_names.is_empty() {
                values.insert("nodes".into(), env.node_names.join(",").into());
            }
            if let Some(job) = &env.scheduler_job_id {
                values.insert("job".into(), job.clone().into());
            }
        }
        self.inner.lock().open.insert(wf.clone());
        self.push(EventKind::WorkflowBegin, &wf, "", "", None, values);
        wf
    }

    /// Ends a workflow execution and flushes.
    pub fn workflow_end(&self, wf: &str) {
        if !self.inner.lock().open.remove(wf) {
            warn!(wf, "workflow_end for a workflow that is not open");
        }
        self.push(EventKind::WorkflowEnd, wf, "", "", None, Values::new());
        self.flush_with(FlushReason::WorkflowEnd);
    }

    pub fn task_begin(&self, wf: &str, dt: &str, inputs: Values, parent: Option<&TaskHandle>) -> TaskHandle {
        if !self.inner.lock().open.contains(wf) {
            warn!(wf, dt, "task_begin on an unknown workflow execution");
        }
        let task = uuid::Uuid::new_v4().simple().to_string();
        self.push(EventKind::TaskBegin, wf, dt, &task, parent.map(|p| p.task.as_str()), inputs);
        TaskHandle { wf: wf.to_string(), dt: dt.to_string(), task, ended: Arc::new(AtomicBool::new(false)) }
    }

    /// Closes a task. A second call on the same handle is ignored.
    pub fn task_end(&self, handle: &TaskHandle, outputs: Values) {
        if handle.ended.swap(true, Ordering::AcqRel) {
            warn!(task = %handle.task, "task already ended; ignoring");
            return;
        }
        self.push(EventKind::TaskEnd, &handle.wf, &handle.dt, &handle.task, None, outputs);
    }

    pub fn flush(&self) {
        self.flush_with(FlushReason::ExplicitFlush);
    }

    fn flush_with(&self, reason: FlushReason) {
        let mut inner = self.inner.lock();
        self.hand_off(&mut inner, reason);
    }

    /// Flushes, waits for outstanding dispatches and syncs the disk log.
    /// Idempotent.
    pub fn close(&self) -> CaptureStats {
        {
            let mut inner = self.inner.lock();
            self.hand_off(&mut inner, FlushReason::WorkflowEnd);
            inner.tx = None;
        }
        if let Some(worker) = self.worker.lock().take() {
            if worker.join().is_err() {
                warn!("capture dispatcher panicked");
            }
        }
        if let Some(disk) = &self.shared.disk {
            let mut disk = disk.lock();
            if let Err(e) = disk.log.flush().and_then(|_| disk.log.get_ref().sync_all()) {
                warn!(error = %e, "provlog sync failed");
            }
        }
        self.stats()
    }
}

impl Drop for CaptureClient {
    fn drop(&mut self) {
        self.close();
    }
}

/// Reads a provlog back into events, in file order.
pub fn read_provlog(reader: impl std::io::BufRead) -> Result<Vec<CaptureEvent>, CaptureError> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e =
            serde_json::from_str(&line).map_err(|e| CaptureError::Provlog { line: i + 1, message: e.to_string() })?;
        events.push(e);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::sink::{DownSink, MemorySink};
    use crate::capture::Value;
    use std::time::Instant;

    fn config(queue_size: usize) -> CaptureConfig {
        CaptureConfig { queue_size, client_id: "c1".into(), ..CaptureConfig::default() }
    }

    fn vals(pairs: &[(&str, Value)]) -> Values {
        pairs.iter().cloned().map(|(k, v)| (k.to_string(), v)).collect()
    }

    #[test]
    fn first_call_has_seq_one_and_ids_are_fresh() {
        let sink = Arc::new(MemorySink::new());
        let c = CaptureClient::with_sink(config(50), sink.clone()).unwrap();
        let a = c.workflow_begin("learning", None);
        let b = c.workflow_begin("learning", None);
        assert_ne!(a, b);
        assert!(a.starts_with("learning."));
        c.close();
        let events: Vec<CaptureEvent> = sink.batches().into_iter().flat_map(|b| b.events).collect();
        assert_eq!(events[0].seq, 1);
        assert_eq!(events[0].kind, EventKind::WorkflowBegin);
    }

    #[test]
    fn queue_size_one_flushes_each_event() {
        let sink = Arc::new(MemorySink::new());
        let c = CaptureClient::with_sink(config(1), sink.clone()).unwrap();
        let wf = c.workflow_begin("w", None);
        c.task_begin(&wf, "t", Values::new(), None);
        c.close();
        let batches = sink.batches();
        assert_eq!(batches.len(), 2);
        assert!(batches.iter().all(|b| b.events.len() == 1 && b.flush_reason == FlushReason::QueueFull));
    }

    #[test]
    fn close_makes_one_workflow_end_batch() {
        let sink = Arc::new(MemorySink::new());
        let c = CaptureClient::with_sink(config(50), sink.clone()).unwrap();
        let wf = c.workflow_begin("w", None);
        let h = c.task_begin(&wf, "training", vals(&[("lr", Value::Float(0.01))]), None);
        c.task_end(&h, vals(&[("loss", Value::Float(0.42))]));
        c.close();
        let batches = sink.batches();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].flush_reason, FlushReason::WorkflowEnd);
        assert_eq!(batches[0].events.len(), 3);
        assert_eq!(batches[0].events[1].values, vals(&[("lr", Value::Float(0.01))]));
        assert_eq!(batches[0].events[2].values, vals(&[("loss", Value::Float(0.42))]));
        assert_eq!(batches[0].events[2].task, h.task);
    }

    #[test]
    fn empty_flush_sends_nothing() {
        let sink = Arc::new(MemorySink::new());
        let c = CaptureClient::with_sink(config(50), sink.clone()).unwrap();
        c.flush();
        c.close();
        assert!(sink.batches().is_empty());
    }

    #[test]
    fn parent_and_double_end() {
        let sink = Arc::new(MemorySink::new());
        let c = CaptureClient::with_sink(config(50), sink.clone()).unwrap();
        let wf = c.workflow_begin("w", None);
        let stage = c.task_begin(&wf, "training", Values::new(), None);
        let epoch = c.task_begin(&wf, "epoch", Values::new(), Some(&stage));
        c.task_end(&epoch, Values::new());
        c.task_end(&epoch, Values::new());
        c.close();
        let events: Vec<CaptureEvent> = sink.batches().into_iter().flat_map(|b| b.events).collect();
        assert_eq!(events[2].parent.as_deref(), Some(stage.task.as_str()));
        assert_eq!(events.iter().filter(|e| e.kind == EventKind::TaskEnd).count(), 1);
    }

    #[test]
    fn paper_shaped_run_flushes_expected_batches() {
        let sink = Arc::new(MemorySink::new());
        let c = CaptureClient::with_sink(config(50), sink.clone()).unwrap();
        let wf = "w.0";
        for _ in 0..7500 {
            let h = c.task_begin(wf, "batch", Values::new(), None);
            c.task_end(&h, Values::new());
        }
        c.close();
        assert_eq!(sink.batches().len(), 15000usize.div_ceil(50));
    }

    #[test]
    fn seq_gapless_across_threads() {
        let sink = Arc::new(MemorySink::new());
        let c = Arc::new(CaptureClient::with_sink(config(7), sink.clone()).unwrap());
        let threads: Vec<_> = (0..4)
            .map(|_| {
                let c = c.clone();
                std::thread::spawn(move || {
                    for _ in 0..250 {
                        let h = c.task_begin("w.1", "t", Values::new(), None);
                        c.task_end(&h, Values::new());
                    }
                })
            })
            .collect();
        for t in threads {
            t.join().unwrap();
        }
        c.close();
        let batches = sink.batches();
        assert!(batches.iter().all(|b| b.events.len() <= 7 && b.events.windows(2).all(|w| w[0].seq < w[1].seq)));
        let mut seqs: Vec<u64> = batches.into_iter().flat_map(|b| b.events).map(|e| e.seq).collect();
        seqs.sort_unstable();
        assert_eq!(seqs, (1..=2000).collect::<Vec<u64>>());
    }

    #[test]
    fn manager_down_never_blocks_and_diskful_keeps_everything() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CaptureConfig { diskful: true, log_path: Some(dir.path().to_path_buf()), ..config(50) };
        let retry = RetryPolicy { attempts: 3, initial_backoff: Duration::from_millis(1) };
        let c = CaptureClient::build(cfg.clone(), Some(Arc::new(DownSink)), retry, DEFAULT_BACKLOG).unwrap();
        let start = Instant::now();
        for _ in 0..5000 {
            let h = c.task_begin("w.1", "t", Values::new(), None);
            c.task_end(&h, Values::new());
        }
        let calls = start.elapsed();
        assert!(calls < Duration::from_secs(5), "10k calls took {calls:?}");
        let stats = c.close();
        assert_eq!(stats.events, 10_000);
        assert_eq!(stats.dropped_events, 0);
        assert_eq!(stats.undelivered_batches, 200);
        let log = std::fs::read_to_string(cfg.provlog_file().unwrap()).unwrap();
        assert_eq!(log.lines().count(), 10_000);
        let undelivered = std::fs::read_to_string(cfg.undelivered_file().unwrap()).unwrap();
        assert_eq!(undelivered.lines().count(), 200);
    }

    #[test]
    fn diskless_failure_counts_drops() {
        let retry = RetryPolicy { attempts: 3, initial_backoff: Duration::from_millis(1) };
        let c = CaptureClient::build(config(10), Some(Arc::new(DownSink)), retry, DEFAULT_BACKLOG).unwrap();
        for _ in 0..25 {
            c.task_begin("w.1", "t", Values::new(), None);
        }
        let stats = c.close();
        assert_eq!(stats.dropped_events, 25);
        assert_eq!(stats.batches, 3);
    }

    #[test]
    fn provlog_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CaptureConfig { diskful: true, online: false, log_path: Some(dir.path().to_path_buf()), ..config(4) };
        let c = CaptureClient::new(cfg.clone()).unwrap();
        let wf = c.workflow_begin("w", None);
        let h = c.task_begin(&wf, "t", vals(&[("x", Value::Int(1))]), None);
        c.task_end(&h, vals(&[("y", Value::Str("a b".into()))]));
        c.workflow_end(&wf);
        c.close();
        let text = std::fs::read_to_string(cfg.provlog_file().unwrap()).unwrap();
        let first = text.lines().next().unwrap();
        assert!(first.starts_with(r#"{"kind":"workflow_begin","wf":"w."#), "{first}");
        let events = read_provlog(text.as_bytes()).unwrap();
        assert_eq!(events.iter().map(|e| e.seq).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        assert_eq!(events[2].values["y"], Value::Str("a b".into()));
    }
}
