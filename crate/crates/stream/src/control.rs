//! HTTP control API for a stream session.
//!
//! | method | path             | body                     |
//! |--------|------------------|--------------------------|
//! | GET    | `/v1/status`     |                          |
//! | POST   | `/v1/model`      | native JSON or PNML      |
//! | POST   | `/v1/multiplier` | `{"value": <positive>}`  |
//! | POST   | `/v1/stop`       |                          |
//! | GET    | `/v1/feed`       | server-sent events       |
//!
//! The feed sends `event` frames carrying the wire JSON of each emitted
//! event and a `status` frame every second.

use std::convert::Infallible;
use std::future::Future;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::stream::{self, Stream};
use plgen_core::io::model_from_str;
use plgen_core::model::Violation;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::broadcast;
use tower_http::cors::CorsLayer;

use crate::session::{FeedGuard, SessionHandle, SessionStatus, StreamError};
use crate::wire::WireEvent;

const STATUS_PERIOD: Duration = Duration::from_secs(1);

/// The session the API controls, if any.
#[derive(Clone, Default)]
pub struct ControlState {
    session: Arc<RwLock<Option<SessionHandle>>>,
}

impl ControlState {
    pub fn new(handle: SessionHandle) -> Self {
        let state = Self::default();
        state.attach(handle);
        state
    }

    pub fn attach(&self, handle: SessionHandle) {
        *self.session.write().unwrap_or_else(|e| e.into_inner()) = Some(handle);
    }

    fn session(&self) -> Option<SessionHandle> {
        self.session.read().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAccepted {
    pub accepted: bool,
    pub model: String,
    pub buffered_events: usize,
    pub events_emitted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierRequest {
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierAccepted {
    pub accepted: bool,
    pub time_multiplier: f64,
}

fn error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    let body = ErrorBody {
        error: code.into(),
        message: message.into(),
        violations: Vec::new(),
    };
    (status, Json(body)).into_response()
}

fn no_session() -> Response {
    error(StatusCode::NOT_FOUND, "no_session", "no stream session is active")
}

fn stream_error(e: StreamError) -> Response {
    match e {
        StreamError::InvalidModel(report) => {
            let body = ErrorBody {
                error: "invalid_model".into(),
                message: report.to_string(),
                violations: report.violations.clone(),
            };
            (StatusCode::UNPROCESSABLE_ENTITY, Json(body)).into_response()
        }
        StreamError::InvalidConfig { .. } => error(StatusCode::BAD_REQUEST, "invalid_value", e.to_string()),
        StreamError::NotRunning => error(StatusCode::CONFLICT, "not_running", e.to_string()),
        other => error(StatusCode::UNPROCESSABLE_ENTITY, "rejected", other.to_string()),
    }
}

pub fn router(state: ControlState) -> Router {
    Router::new()
        .route("/v1/status", get(status))
        .route("/v1/model", post(post_model))
        .route("/v1/multiplier", post(post_multiplier))
        .route("/v1/stop", post(post_stop))
        .route("/v1/feed", get(feed))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves the API on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: ControlState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

async fn status(State(state): State<ControlState>) -> Response {
    match state.session() {
        Some(h) => Json(h.status()).into_response(),
        None => no_session(),
    }
}

async fn post_model(State(state): State<ControlState>, body: String) -> Response {
    let Some(h) = state.session() else {
        return no_session();
    };
    let model = match model_from_str(&body, None) {
        Ok(m) => m,
        Err(e) => return error(StatusCode::BAD_REQUEST, "parse", e.to_string()),
    };
    match h.swap_model(model) {
        Ok(ack) => Json(ModelAccepted {
            accepted: true,
            model: ack.model,
            buffered_events: ack.buffered_events,
            events_emitted: ack.events_emitted,
        })
        .into_response(),
        Err(e) => stream_error(e),
    }
}

async fn post_multiplier(State(state): State<ControlState>, body: String) -> Response {
    let Some(h) = state.session() else {
        return no_session();
    };
    let request: MultiplierRequest = match serde_json::from_str(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, "parse", e.to_string()),
    };
    match h.set_multiplier(request.value) {
        Ok(m) => Json(MultiplierAccepted {
            accepted: true,
            time_multiplier: m,
        })
        .into_response(),
        Err(e) => stream_error(e),
    }
}

async fn post_stop(State(state): State<ControlState>) -> Response {
    let Some(h) = state.session() else {
        return no_session();
    };
    h.stop();
    Json(json!({ "stopped": true })).into_response()
}

async fn feed(State(state): State<ControlState>) -> Response {
    let Some(h) = state.session() else {
        return no_session();
    };
    if !h.is_running() {
        return error(StatusCode::CONFLICT, "not_running", "the session is not running");
    }
    Sse::new(feed_stream(h))
        .keep_alive(KeepAlive::default())
        .into_response()
}

struct Feed {
    handle: SessionHandle,
    rx: broadcast::Receiver<Arc<WireEvent>>,
    ticker: tokio::time::Interval,
    done: bool,
    _guard: FeedGuard,
}

fn status_frame(status: &SessionStatus) -> SseEvent {
    let mut s = status.clone();
    s.recent_events.clear();
    SseEvent::default()
        .event("status")
        .data(serde_json::to_string(&s).expect("status serializes"))
}

fn feed_stream(handle: SessionHandle) -> impl Stream<Item = Result<SseEvent, Infallible>> {
    let mut ticker = tokio::time::interval(STATUS_PERIOD);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    let state = Feed {
        rx: handle.subscribe(),
        _guard: handle.feed_guard(),
        handle,
        ticker,
        done: false,
    };
    stream::unfold(state, |mut f| async move {
        if f.done {
            return None;
        }
        loop {
            tokio::select! {
                r = f.rx.recv() => match r {
                    Ok(event) => {
                        let frame = SseEvent::default().event("event").data(event.to_json());
                        return Some((Ok(frame), f));
                    }
                    Err(broadcast::error::RecvError::Lagged(n)) => f.handle.record_dropped(n),
                    Err(broadcast::error::RecvError::Closed) => return None,
                },
                _ = f.ticker.tick() => {
                    let status = f.handle.status();
                    f.done = !status.running;
                    return Some((Ok(status_frame(&status)), f));
                }
            }
        }
    })
}
