//! HTTP front of the manager. Handlers are stateless; ingest and bulk loads
//! take the store's write lock, queries share the read lock.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use super::Manager;
use crate::capture::Batch;
use crate::model::SchemaVariant;
use crate::queries::{self, NamedQuery, OutputFormat, Params};

const INLINE_INGEST_MAX: usize = 8;

#[derive(Debug, Deserialize)]
pub struct QueryRequest {
    pub query: String,
    #[serde(default)]
    pub variant: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

fn bad_request(msg: impl ToString) -> Response {
    (StatusCode::BAD_REQUEST, Json(ErrorBody { error: msg.to_string() })).into_response()
}

fn internal(msg: impl ToString) -> Response {
    (StatusCode::SERVICE_UNAVAILABLE, Json(ErrorBody { error: msg.to_string() })).into_response()
}

fn utf8(body: &Bytes) -> Result<String, String> {
    std::str::from_utf8(body).map(str::to_string).map_err(|e| format!("body is not UTF-8: {e}"))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, Response> {
    tokio::task::spawn_blocking(f).await.map_err(internal)
}

async fn ingest(State(m): State<Arc<Manager>>, body: Bytes) -> Response {
    let batch: Batch = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => return bad_request(format!("malformed batch: {e}")),
    };
    // Small batches hold the write lock only briefly; skip the thread handoff.
    if batch.events.len() <= INLINE_INGEST_MAX {
        return Json(m.ingest_batch(&batch)).into_response();
    }
    match blocking(move || m.ingest_batch(&batch)).await {
        Ok(ack) => Json(ack).into_response(),
        Err(r) => r,
    }
}

async fn status(State(m): State<Arc<Manager>>) -> Response {
    Json(m.status()).into_response()
}

async fn specs(State(m): State<Arc<Manager>>, body: Bytes) -> Response {
    let text = match utf8(&body) {
        Ok(t) => t,
        Err(e) => return bad_request(e),
    };
    match m.load_spec_text(&text) {
        Ok(warnings) => {
            let warnings: Vec<String> = warnings.iter().map(ToString::to_string).collect();
            Json(serde_json::json!({ "loaded": true, "warnings": warnings })).into_response()
        }
        Err(e) => bad_request(e),
    }
}

async fn export(State(m): State<Arc<Manager>>) -> Response {
    match blocking(move || m.export_string()).await {
        Ok(dump) => ([(header::CONTENT_TYPE, "application/n-triples")], dump).into_response(),
        Err(r) => r,
    }
}

async fn import(State(m): State<Arc<Manager>>, body: Bytes) -> Response {
    let text = match utf8(&body) {
        Ok(t) => t,
        Err(e) => return bad_request(e),
    };
    match blocking(move || m.import(&text)).await {
        Ok(Ok(n)) => Json(serde_json::json!({ "imported": n })).into_response(),
        Ok(Err(e)) => bad_request(e),
        Err(r) => r,
    }
}

fn param_text(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

async fn query(State(m): State<Arc<Manager>>, body: Bytes) -> Response {
    let req: QueryRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return bad_request(format!("malformed query request: {e}")),
    };
    let q: NamedQuery = match req.query.parse() {
        Ok(q) => q,
        Err(e) => return bad_request(e),
    };
    let variant = match req.variant.as_deref() {
        None => m.variant(),
        Some(v) => match SchemaVariant::parse(v) {
            Some(v) => v,
            None => return bad_request(format!("unknown variant {v:?}")),
        },
    };
    let params = Params(req.params.iter().map(|(k, v)| (k.clone(), param_text(v))).collect());
    let ast = match queries::build(q, variant, &params) {
        Ok(a) => a,
        Err(e) => return bad_request(e),
    };
    let result = blocking(move || queries::execute(&m.store(), &ast)).await;
    match result {
        Ok(Ok(table)) => {
            ([(header::CONTENT_TYPE, "application/json")], queries::format_table(&table, OutputFormat::Json))
                .into_response()
        }
        Ok(Err(e)) => bad_request(e),
        Err(r) => r,
    }
}

pub fn router(manager: Arc<Manager>) -> Router {
    Router::new()
        .route("/ingest", post(ingest))
        .route("/status", get(status))
        .route("/specs", post(specs))
        .route("/export", get(export))
        .route("/import", post(import))
        .route("/query", post(query))
        .with_state(manager)
}

/// Serves until the process ends.
pub async fn serve(manager: Arc<Manager>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "manager listening");
    axum::serve(listener, router(manager)).await
}

/// A server on its own runtime thread, stopped on drop.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Moves the calling thread to the idle scheduling class, so it only runs
/// when no normal thread wants the CPU. No-op off Linux.
pub fn idle_priority() {
    #[cfg(target_os = "linux")]
    {
        let param = libc::sched_param { sched_priority: 0 };
        // SAFETY: pid 0 names the calling thread; `param` outlives the call.
        let rc = unsafe { libc::sched_setscheduler(0, libc::SCHED_IDLE, &param) };
        if rc != 0 {
            tracing::debug!(error = %std::io::Error::last_os_error(), "SCHED_IDLE not applied");
        }
    }
}

/// Binds `addr` (port 0 picks a free one) and serves in the background.
/// With `idle` set every server thread runs in the idle scheduling class,
/// standing in for a manager on another host.
pub fn spawn(manager: Arc<Manager>, addr: SocketAddr, idle: bool) -> std::io::Result<ServerHandle> {
    let mut builder = tokio::runtime::Builder::new_multi_thread();
    builder.worker_threads(2).enable_all();
    if idle {
        builder.on_thread_start(idle_priority);
    }
    let rt = builder.build()?;
    let listener = rt.block_on(TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::Builder::new().name("manager-http".into()).spawn(move || {
        if idle {
            idle_priority();
        }
        rt.block_on(async move {
            let server = axum::serve(listener, router(manager)).with_graceful_shutdown(async {
                let _ = rx.await;
            });
            if let Err(e) = server.await {
                tracing::error!(error = %e, "manager server failed");
            }
        });
    })?;
    Ok(ServerHandle { addr, shutdown: Some(tx), thread: Some(thread) })
}
