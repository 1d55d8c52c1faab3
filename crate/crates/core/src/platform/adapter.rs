use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use bytes::Bytes;

use super::descriptor::FunctionDescriptor;
use super::logs::LogSink;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Invocation {
    pub body: Bytes,
    pub content_type: Option<String>,
}

impl Invocation {
    pub fn text(body: impl Into<String>) -> Self {
        Self { body: Bytes::from(body.into()), content_type: Some("text/plain; charset=utf-8".into()) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvocationResponse {
    pub status: u16,
    pub body: Bytes,
    pub content_type: Option<String>,
}

impl InvocationResponse {
    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdapterError {
    #[error("prepare failed: {0}")]
    Prepare(String),
    #[error("start failed: {0}")]
    Start(String),
    #[error("function is not running")]
    NotRunning,
    #[error("guest error: {0}")]
    Guest(String),
    #[error("invocation timed out after {0:?}")]
    Timeout(Duration),
}

/// Output of `prepare`: everything needed to launch the guest, rooted in the
/// unit's working directory.
#[derive(Debug, Clone)]
pub struct PreparedUnit {
    pub workdir: PathBuf,
    pub program: String,
    pub args: Vec<String>,
    pub env: BTreeMap<String, String>,
}

/// A guest runtime. `prepare` must not touch anything outside `workdir`.
#[async_trait]
pub trait RuntimeAdapter: Send + Sync {
    fn identifier(&self) -> &str;

    async fn prepare(&self, descriptor: &FunctionDescriptor, workdir: &Path) -> Result<PreparedUnit, AdapterError>;

    /// Launches the unit and waits until it answers a health probe or
    /// `timeout` elapses. Guest stdout/stderr lines go to `logs`.
    async fn start(
        &self,
        unit: PreparedUnit,
        timeout: Duration,
        logs: LogSink,
    ) -> Result<Arc<dyn RunningUnit>, AdapterError>;
}

/// Handle to a started guest. After `stop`, `invoke` returns `NotRunning`.
#[async_trait]
pub trait RunningUnit: Send + Sync {
    async fn probe(&self) -> bool;

    async fn invoke(&self, request: Invocation, timeout: Duration) -> Result<InvocationResponse, AdapterError>;

    async fn stop(&self);

    fn pid(&self) -> Option<u32>;

    fn port(&self) -> Option<u16>;
}
