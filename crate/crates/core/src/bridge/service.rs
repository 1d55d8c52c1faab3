//! HTTP front of the build pipeline: `POST /build` and a server-sent event
//! stream of stage transitions at `GET /build/{session}/events`.

use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::broadcast;

use super::{Bridge, BuildError, BuildOutcome, StageEvent, UserDescription};

#[derive(Debug, Clone, Deserialize)]
pub struct BuildRequest {
    pub description: String,
    pub runtime: String,
    #[serde(default)]
    pub task_id: Option<String>,
    /// Reply immediately with the session id instead of waiting for the
    /// build to finish.
    #[serde(default, rename = "async")]
    pub run_async: bool,
}

#[derive(Debug, Clone, Serialize)]
struct SessionEvent<'a> {
    session_id: &'a str,
    seq: usize,
    #[serde(flatten)]
    event: &'a StageEvent,
}

struct Session {
    history: Vec<StageEvent>,
    tx: broadcast::Sender<StageEvent>,
    result: Option<(StatusCode, Value)>,
}

#[derive(Clone)]
pub struct BuildService {
    bridge: Arc<Bridge>,
    sessions: Arc<Mutex<HashMap<String, Session>>>,
}

impl BuildService {
    pub fn new(bridge: Arc<Bridge>) -> Self {
        Self { bridge, sessions: Arc::new(Mutex::new(HashMap::new())) }
    }

    pub fn bridge(&self) -> &Arc<Bridge> {
        &self.bridge
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/build", post(submit))
            .route("/build/{session}", get(status))
            .route("/build/{session}/events", get(events))
            .with_state(self.clone())
    }

    fn open_session(&self) -> String {
        let id = format!("{:016x}", rand::random::<u64>());
        let (tx, _) = broadcast::channel(64);
        self.sessions.lock().unwrap().insert(id.clone(), Session { history: Vec::new(), tx, result: None });
        id
    }

    fn record(&self, id: &str, event: StageEvent) {
        let mut sessions = self.sessions.lock().unwrap();
        if let Some(s) = sessions.get_mut(id) {
            s.history.push(event.clone());
            let _ = s.tx.send(event);
        }
    }

    async fn run(&self, id: &str, description: UserDescription) -> (StatusCode, Value) {
        let this = self.clone();
        let sid = id.to_string();
        let progress = move |e: StageEvent| this.record(&sid, e);
        let result = self.bridge.build_with_progress(&description, &progress).await;
        let reply = build_reply(id, result);
        if let Some(s) = self.sessions.lock().unwrap().get_mut(id) {
            s.result = Some(reply.clone());
        }
        reply
    }
}

fn build_reply(session_id: &str, result: Result<BuildOutcome, BuildError>) -> (StatusCode, Value) {
    match result {
        Ok(o) => (
            StatusCode::CREATED,
            json!({
                "session_id": session_id,
                "record": o.record,
                "artifact": o.artifact.summary(),
                "breakdown": o.breakdown,
            }),
        ),
        Err(e) => (
            StatusCode::UNPROCESSABLE_ENTITY,
            json!({
                "session_id": session_id,
                "error": e.kind,
                "failure": e.failure,
                "record": e.record,
                "artifact": e.artifact.as_ref().map(|a| a.summary()),
                "breakdown": e.breakdown,
            }),
        ),
    }
}

async fn submit(State(svc): State<BuildService>, Json(req): Json<BuildRequest>) -> Response {
    let description = UserDescription { text: req.description, task_id: req.task_id, requested_runtime: req.runtime };
    if let Err(e) = description.validate() {
        return (StatusCode::BAD_REQUEST, Json(json!({ "error": "invalid_description", "detail": e.to_string() })))
            .into_response();
    }
    let id = svc.open_session();
    if req.run_async {
        let worker = svc.clone();
        let sid = id.clone();
        tokio::spawn(async move {
            worker.run(&sid, description).await;
        });
        let body = json!({ "session_id": id, "events": format!("/build/{id}/events") });
        return (StatusCode::ACCEPTED, Json(body)).into_response();
    }
    let (status, body) = svc.run(&id, description).await;
    (status, Json(body)).into_response()
}

async fn status(State(svc): State<BuildService>, Path(id): Path<String>) -> Response {
    let sessions = svc.sessions.lock().unwrap();
    let Some(s) = sessions.get(&id) else {
        return (StatusCode::NOT_FOUND, Json(json!({ "error": "not_found", "detail": id }))).into_response();
    };
    match &s.result {
        Some((code, body)) => (*code, Json(body.clone())).into_response(),
        None => Json(json!({ "session_id": id, "stage": s.history.last().map(|e| e.stage) })).into_response(),
    }
}

fn sse_event(session_id: &str, seq: usize, event: &StageEvent) -> Event {
    let payload = SessionEvent { session_id, seq, event };
    Event::default()
        .event("stage")
        .id(seq.to_string())
        .json_data(&payload)
        .unwrap_or_else(|_| Event::default().event("stage").data("{}"))
}

/// Replays the session's events so far, then follows it live. The stream
/// ends after the terminal `live` or `failed` event.
async fn events(State(svc): State<BuildService>, Path(id): Path<String>) -> Response {
    let (history, rx) = {
        let sessions = svc.sessions.lock().unwrap();
        let Some(s) = sessions.get(&id) else {
            return (StatusCode::NOT_FOUND, Json(json!({ "error": "not_found", "detail": id }))).into_response();
        };
        (s.history.clone(), s.tx.subscribe())
    };
    Sse::new(event_stream(id, history, rx)).keep_alive(KeepAlive::default()).into_response()
}

fn event_stream(
    id: String,
    history: Vec<StageEvent>,
    rx: broadcast::Receiver<StageEvent>,
) -> impl Stream<Item = Result<Event, Infallible>> {
    let finished = history.last().is_some_and(|e| e.stage.is_terminal());
    let replayed = history.len();
    let past: Vec<Result<Event, Infallible>> =
        history.iter().enumerate().map(|(i, e)| Ok(sse_event(&id, i, e))).collect();
    let live = stream::unfold((rx, replayed, finished, id), |(mut rx, seq, done, id)| async move {
        if done {
            return None;
        }
        loop {
            match rx.recv().await {
                Ok(e) => {
                    let terminal = e.stage.is_terminal();
                    let item = Ok(sse_event(&id, seq, &e));
                    return Some((item, (rx, seq + 1, terminal, id)));
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    stream::iter(past).chain(live)
}
