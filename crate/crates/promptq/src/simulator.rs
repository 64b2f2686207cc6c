//! Local HTTP endpoint simulator.
//!
//! Serves the wire format selected by a [`SimulatorProfile`] plus
//! `GET /inspect`, which returns every request seen so far with its arrival,
//! dispatch and completion instants (seconds since the server started).
//! Decisions come from [`SimulatorEngine`], so a fixed seed and request
//! sequence always give the same statuses and latencies.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use promptq_core::profile::prompt_digest;
use promptq_core::profile::{ConcurrencyMode, Protocol, SimulatorEngine, SimulatorProfile, Verdict};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::time::Instant;
use tokio_util::sync::CancellationToken;

/// One request as seen by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestLogEntry {
    pub index: u64,
    pub arrival: f64,
    pub dispatch: f64,
    pub completion: f64,
    pub status: u16,
    pub model: String,
    pub prompt_digest: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InspectLog {
    pub requests: Vec<RequestLogEntry>,
}

impl InspectLog {
    /// Entries for one model, in arrival order.
    pub fn for_model<'a>(&'a self, model: &'a str) -> impl Iterator<Item = &'a RequestLogEntry> {
        self.requests.iter().filter(move |e| e.model == model)
    }
}

struct Inner {
    profile: SimulatorProfile,
    started: Instant,
    state: Mutex<EngineState>,
    log: Mutex<Vec<RequestLogEntry>>,
}

struct EngineState {
    engine: SimulatorEngine,
    /// Completion signal of the last request admitted in serialized mode.
    tail: Option<oneshot::Receiver<()>>,
}

impl Inner {
    fn since_start(&self, t: Instant) -> f64 {
        t.saturating_duration_since(self.started).as_secs_f64()
    }

    fn record(&self, entry: RequestLogEntry) {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).push(entry);
    }

    fn snapshot(&self) -> InspectLog {
        let mut requests = self.log.lock().unwrap_or_else(|e| e.into_inner()).clone();
        requests.sort_by_key(|e| e.index);
        InspectLog { requests }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimulatorError {
    #[error("invalid profile: {0}")]
    Profile(#[from] promptq_core::profile::ProfileError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
}

/// A running simulator. Dropping the handle does not stop the server; call
/// [`SimulatorHandle::shutdown`].
#[derive(Clone)]
pub struct SimulatorHandle {
    addr: SocketAddr,
    inner: Arc<Inner>,
    stop: CancellationToken,
}

impl SimulatorHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Request log straight from memory (the same data `/inspect` serves).
    pub fn inspect(&self) -> InspectLog {
        self.inner.snapshot()
    }

    pub fn shutdown(&self) {
        self.stop.cancel();
    }

    pub fn stopped(&self) -> tokio_util::sync::WaitForCancellationFuture<'_> {
        self.stop.cancelled()
    }
}

/// Binds `addr` (port 0 picks a free port) and serves until shutdown.
pub async fn serve(profile: SimulatorProfile, addr: SocketAddr) -> Result<SimulatorHandle, SimulatorError> {
    let engine = SimulatorEngine::new(profile.clone())?;
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| SimulatorError::Bind { addr, source })?;
    let addr = listener
        .local_addr()
        .map_err(|source| SimulatorError::Bind { addr, source })?;
    let inner = Arc::new(Inner {
        profile,
        started: Instant::now(),
        state: Mutex::new(EngineState { engine, tail: None }),
        log: Mutex::new(Vec::new()),
    });
    let stop = CancellationToken::new();

    let chat_path = match inner.profile.protocol {
        Protocol::OpenaiCompatible => "/v1/chat/completions",
        Protocol::Ollama => "/api/chat",
    };
    let app = Router::new()
        .route(chat_path, post(chat))
        .route("/inspect", get(inspect))
        .with_state(inner.clone());

    let graceful = stop.clone();
    tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async move { graceful.cancelled().await })
            .await;
    });
    Ok(SimulatorHandle { addr, inner, stop })
}

async fn inspect(State(inner): State<Arc<Inner>>) -> Json<InspectLog> {
    Json(inner.snapshot())
}

#[derive(Deserialize)]
struct ChatRequest {
    model: String,
    messages: Vec<WireMessage>,
}

#[derive(Deserialize)]
struct WireMessage {
    role: String,
    content: String,
}

fn error_body(protocol: Protocol, status: u16, message: &str) -> Response {
    let code = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let body = match protocol {
        Protocol::OpenaiCompatible => json!({"error": {"message": message, "type": "simulated", "code": status}}),
        Protocol::Ollama => json!({"error": message}),
    };
    (code, Json(body)).into_response()
}

async fn chat(State(inner): State<Arc<Inner>>, body: Bytes) -> Response {
    let protocol = inner.profile.protocol;
    let req: ChatRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error_body(protocol, 400, &format!("malformed request: {e}")),
    };
    if req.model.is_empty() || req.messages.is_empty() {
        return error_body(protocol, 400, "model and messages are required");
    }
    let prompt = req
        .messages
        .iter()
        .rev()
        .find(|m| m.role == "user")
        .map(|m| m.content.clone())
        .unwrap_or_default();

    // The work runs on its own task so that a client hanging up does not
    // cut a request short: it still occupies the endpoint and gets logged.
    let work = tokio::spawn(handle(inner, req.model, prompt));
    match work.await {
        Ok(resp) => resp,
        Err(_) => error_body(protocol, 500, "simulator task failed"),
    }
}

async fn handle(inner: Arc<Inner>, model: String, prompt: String) -> Response {
    let protocol = inner.profile.protocol;
    let (arrival, decision, wait_for, done) = {
        let mut state = inner.state.lock().unwrap_or_else(|e| e.into_inner());
        // stamped under the lock so arrival order is queue order
        let arrival = Instant::now();
        let decision = state.engine.decide(&model, &prompt, arrival - inner.started);
        let serialized = inner.profile.concurrency == ConcurrencyMode::Serialized;
        if decision.verdict == Verdict::Ok && serialized {
            let (tx, rx) = oneshot::channel();
            let prev = state.tail.replace(rx);
            (arrival, decision, prev, Some(tx))
        } else {
            (arrival, decision, None, None)
        }
    };

    let entry = |dispatch: Instant, status: u16| RequestLogEntry {
        index: decision.index,
        arrival: inner.since_start(arrival),
        dispatch: inner.since_start(dispatch),
        completion: inner.since_start(Instant::now()),
        status,
        model: model.clone(),
        prompt_digest: prompt_digest(&prompt),
    };

    if decision.verdict != Verdict::Ok {
        let status = decision.verdict.status();
        inner.record(entry(arrival, status));
        let message = match decision.verdict {
            Verdict::OverQuota => "rate limit exceeded",
            _ => "injected fault",
        };
        return error_body(protocol, status, message);
    }

    if let Some(prev) = wait_for {
        // an error means the previous request is gone; either way it is done
        let _ = prev.await;
    }
    let dispatch = Instant::now();
    tokio::time::sleep(decision.latency).await;
    inner.record(entry(dispatch, 200));
    if let Some(tx) = done {
        let _ = tx.send(());
    }

    let text = inner.profile.response_text(&model, &prompt);
    let body = match protocol {
        Protocol::OpenaiCompatible => json!({
            "id": format!("sim-{}", decision.index),
            "object": "chat.completion",
            "model": model,
            "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
        }),
        Protocol::Ollama => json!({
            "model": model,
            "message": {"role": "assistant", "content": text},
            "done": true,
        }),
    };
    (StatusCode::OK, Json(body)).into_response()
}

/// Fetches `/inspect` over HTTP.
pub async fn fetch_inspect(base_url: &str) -> Result<InspectLog, reqwest::Error> {
    reqwest::get(format!("{}/inspect", base_url.trim_end_matches('/')))
        .await?
        .error_for_status()?
        .json()
        .await
}
