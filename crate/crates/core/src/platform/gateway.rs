//! HTTP gateway: management API under `/functions` and trigger dispatch
//! under `/fn/{name}`.

use std::net::SocketAddr;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{any, delete, get, post};
use axum::{Json, Router};
use serde_json::json;

use super::{FunctionDescriptor, Invocation, Platform, PlatformError};
use crate::server::BackgroundServer;

/// Response header naming the gateway-side reason for a failed trigger:
/// `not-found`, `guest` or `timeout`.
pub const ERROR_HEADER: &str = "x-forge-error";

const MAX_DESCRIPTOR_BYTES: usize = 32 * 1024 * 1024;

pub fn router(platform: Platform) -> Router {
    Router::new()
        .route("/functions", post(deploy).get(list))
        .route("/functions/{name}", delete(remove).get(describe))
        .route("/functions/{name}/logs", get(logs))
        .route("/fn/{name}", any(trigger))
        .route("/runtimes", get(runtimes))
        .layer(DefaultBodyLimit::max(MAX_DESCRIPTOR_BYTES))
        .with_state(platform)
}

fn error_body(status: StatusCode, err: &PlatformError) -> Response {
    let kind = match err {
        PlatformError::DuplicateName(_) => "duplicate_name",
        PlatformError::UnknownRuntime(_) => "unknown_runtime",
        PlatformError::PrepareFailed { .. } => "prepare_failed",
        PlatformError::StartFailed { .. } => "start_failed",
        PlatformError::NotFound(_) => "not_found",
        PlatformError::GuestError(_) => "guest_error",
        PlatformError::Timeout(_) => "timeout",
        PlatformError::Busy => "busy",
    };
    let detail = match err {
        PlatformError::PrepareFailed { detail, .. } | PlatformError::StartFailed { detail, .. } => detail.clone(),
        PlatformError::GuestError(detail) => detail.clone(),
        other => other.to_string(),
    };
    (status, Json(json!({ "error": kind, "detail": detail, "record": err.record() }))).into_response()
}

async fn deploy(State(platform): State<Platform>, body: Bytes) -> Response {
    let descriptor: FunctionDescriptor = match serde_json::from_slice(&body) {
        Ok(d) => d,
        Err(e) => {
            return (StatusCode::BAD_REQUEST, Json(json!({ "error": "invalid_descriptor", "detail": e.to_string() })))
                .into_response()
        }
    };
    match platform.deploy(descriptor).await {
        Ok(record) => (StatusCode::CREATED, Json(record)).into_response(),
        Err(e) => {
            let status = match &e {
                PlatformError::DuplicateName(_) => StatusCode::CONFLICT,
                PlatformError::UnknownRuntime(_) => StatusCode::BAD_REQUEST,
                PlatformError::PrepareFailed { record: None, .. } => StatusCode::BAD_REQUEST,
                _ => StatusCode::UNPROCESSABLE_ENTITY,
            };
            error_body(status, &e)
        }
    }
}

async fn list(State(platform): State<Platform>) -> Response {
    Json(platform.list()).into_response()
}

async fn runtimes(State(platform): State<Platform>) -> Response {
    Json(platform.runtimes()).into_response()
}

async fn describe(State(platform): State<Platform>, Path(name): Path<String>) -> Response {
    match platform.get(&name) {
        Some(r) => Json(r).into_response(),
        None => error_body(StatusCode::NOT_FOUND, &PlatformError::NotFound(name)),
    }
}

async fn remove(State(platform): State<Platform>, Path(name): Path<String>) -> Response {
    match platform.remove(&name).await {
        Ok(r) => Json(r).into_response(),
        Err(e) => error_body(StatusCode::NOT_FOUND, &e),
    }
}

async fn logs(State(platform): State<Platform>, Path(name): Path<String>) -> Response {
    match platform.logs(&name) {
        Ok(entries) => Json(entries).into_response(),
        Err(e) => error_body(StatusCode::NOT_FOUND, &e),
    }
}

async fn trigger(State(platform): State<Platform>, Path(name): Path<String>, headers: HeaderMap, body: Bytes) -> Response {
    let content_type = headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).map(str::to_string);
    match platform.invoke(&name, Invocation { body, content_type }).await {
        Ok(resp) => {
            let status = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::BAD_GATEWAY);
            let mut out = (status, resp.body).into_response();
            if let Some(ct) = resp.content_type.and_then(|c| HeaderValue::from_str(&c).ok()) {
                out.headers_mut().insert(header::CONTENT_TYPE, ct);
            }
            out
        }
        Err(e) => {
            let (status, tag) = match &e {
                PlatformError::NotFound(_) => (StatusCode::NOT_FOUND, "not-found"),
                PlatformError::Timeout(_) => (StatusCode::GATEWAY_TIMEOUT, "timeout"),
                _ => (StatusCode::INTERNAL_SERVER_ERROR, "guest"),
            };
            let mut out = error_body(status, &e);
            out.headers_mut().insert(ERROR_HEADER, HeaderValue::from_static(tag));
            out
        }
    }
}

/// The gateway served in the background on its own listener.
pub struct GatewayServer {
    pub platform: Platform,
    server: BackgroundServer,
}

impl GatewayServer {
    pub async fn start(platform: Platform, addr: SocketAddr) -> std::io::Result<Self> {
        let server = BackgroundServer::start(router(platform.clone()), addr).await?;
        Ok(Self { platform, server })
    }

    pub fn addr(&self) -> SocketAddr {
        self.server.addr()
    }

    pub fn base_url(&self) -> String {
        self.server.base_url()
    }

    /// Trigger URL for a function on this gateway.
    pub fn function_url(&self, name: &str) -> String {
        format!("{}/fn/{name}", self.base_url())
    }
}
