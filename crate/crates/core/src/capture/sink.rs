use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;

use super::{Batch, CaptureError};

/// Destination of flushed batches.
pub trait BatchSink: Send + Sync {
    fn send(&self, batch: &Batch) -> Result<(), CaptureError>;
}

impl<T: BatchSink + ?Sized> BatchSink for Arc<T> {
    fn send(&self, batch: &Batch) -> Result<(), CaptureError> {
        (**self).send(batch)
    }
}

/// POSTs batches to `<endpoint>/ingest`; anything but 2xx is a failure.
pub struct HttpSink {
    url: String,
    agent: ureq::Agent,
}

impl HttpSink {
    pub fn new(endpoint: &str) -> HttpSink {
        let agent = ureq::Agent::config_builder().timeout_global(Some(Duration::from_secs(10))).build().into();
        HttpSink { url: format!("{}/ingest", endpoint.trim_end_matches('/')), agent }
    }
}

impl BatchSink for HttpSink {
    fn send(&self, batch: &Batch) -> Result<(), CaptureError> {
        let body = serde_json::to_string(batch).map_err(|e| CaptureError::Dispatch(e.to_string()))?;
        self.agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(body)
            .map(|_| ())
            .map_err(|e| CaptureError::Dispatch(e.to_string()))
    }
}

/// Keeps every batch in memory. Useful for tests and dry runs.
#[derive(Default)]
pub struct MemorySink {
    batches: Mutex<Vec<Batch>>,
}

impl MemorySink {
    pub fn new() -> MemorySink {
        MemorySink::default()
    }

    pub fn batches(&self) -> Vec<Batch> {
        self.batches.lock().clone()
    }
}

impl BatchSink for MemorySink {
    fn send(&self, batch: &Batch) -> Result<(), CaptureError> {
        self.batches.lock().push(batch.clone());
        Ok(())
    }
}

/// Always fails, like an unreachable manager.
pub struct DownSink;

impl BatchSink for DownSink {
    fn send(&self, _: &Batch) -> Result<(), CaptureError> {
        Err(CaptureError::Dispatch("manager unreachable".into()))
    }
}
