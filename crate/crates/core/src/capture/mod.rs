//! Client-side capture: events, batching client, disk log, broker spool and
//! consumer.

mod broker;
mod client;
mod config;
mod event;
mod sink;

use thiserror::Error;

pub use broker::{Broker, Consumer};
pub use client::{now_micros, read_provlog, CaptureClient, CaptureStats, RetryPolicy, TaskHandle, DEFAULT_BACKLOG};
pub use config::CaptureConfig;
pub use event::{spec_of_workflow_exec, Batch, CaptureEvent, EventKind, FlushReason, Value, Values};
pub use sink::{BatchSink, DownSink, HttpSink, MemorySink};

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("capture configuration: {0}")]
    Config(String),
    #[error("dispatch failed: {0}")]
    Dispatch(String),
    #[error("line {line}: {message}")]
    Provlog { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
