use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::Literal;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    WorkflowBegin,
    TaskBegin,
    TaskEnd,
    WorkflowEnd,
}

/// Attribute value on the wire.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
}

impl Value {
    pub fn to_literal(&self) -> Literal {
        match self {
            Value::Int(v) => Literal::integer(*v),
            Value::Float(v) => Literal::float(*v),
            Value::Str(v) => Literal::string(v.as_str()),
            Value::Bool(v) => Literal::boolean(*v),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Str(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

pub type Values = BTreeMap<String, Value>;

/// One capture call. Workflow events leave `dt` and `task` empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureEvent {
    pub kind: EventKind,
    pub wf: String,
    #[serde(default)]
    pub dt: String,
    #[serde(default)]
    pub task: String,
    #[serde(default)]
    pub parent: Option<String>,
    #[serde(default)]
    pub values: Values,
    pub t: i64,
    pub seq: u64,
}

impl CaptureEvent {
    /// Name of the specification a workflow execution id refers to.
    pub fn spec_name(&self) -> &str {
        spec_of_workflow_exec(&self.wf)
    }
}

/// Workflow execution ids are `<spec>.<hex>`.
pub fn spec_of_workflow_exec(wf: &str) -> &str {
    wf.split_once('.').map_or(wf, |(spec, _)| spec)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlushReason {
    QueueFull,
    ExplicitFlush,
    WorkflowEnd,
}

/// Wire body of a POST to `/ingest`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub client: String,
    pub flush_reason: FlushReason,
    pub events: Vec<CaptureEvent>,
}
