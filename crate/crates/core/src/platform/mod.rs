//! Embedded FaaS platform: function registry, guest runtime adapters, HTTP
//! trigger dispatch and a management API.
//!
//! Lifecycle of a deployment: `Pending -> Preparing -> Running | Failed`,
//! then `Running | Failed -> Removed`. A function is invocable exactly while
//! its record is `Running`.

mod adapter;
mod descriptor;
pub mod gateway;
mod guest;
mod logs;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tokio::sync::{OwnedMutexGuard, Semaphore};

pub use adapter::{AdapterError, Invocation, InvocationResponse, PreparedUnit, RunningUnit, RuntimeAdapter};
pub use descriptor::{
    is_valid_name, DeploymentRecord, DeploymentStatus, FunctionDescriptor, IllegalTransition, ResourceLimits,
};
pub use gateway::GatewayServer;
pub use guest::SubprocessAdapter;
pub use logs::{LogEntry, LogRing, LogSink, LogStream};

use crate::runtime::{GuestLanguage, NODEJS, PYTHON3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlatformConfig {
    pub listen: String,
    /// Runtime identifiers the platform will register. Built-ins outside the
    /// list are not available.
    pub adapters: Vec<String>,
    #[serde(with = "crate::serde_util::duration_secs_f64", rename = "deploy_timeout_secs")]
    pub deploy_timeout: Duration,
    #[serde(with = "crate::serde_util::duration_secs_f64", rename = "invocation_timeout_secs")]
    pub invocation_timeout: Duration,
    pub max_concurrency: u32,
    pub install_dependencies: bool,
    /// Where unit working directories live; a temp dir when unset.
    pub work_dir: Option<PathBuf>,
    pub log_capacity: usize,
    pub python_bin: String,
    pub node_bin: String,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            adapters: vec![PYTHON3.into(), NODEJS.into()],
            deploy_timeout: Duration::from_secs(30),
            invocation_timeout: Duration::from_secs(10),
            max_concurrency: 16,
            install_dependencies: true,
            work_dir: None,
            log_capacity: 256,
            python_bin: "python3".into(),
            node_bin: "node".into(),
        }
    }
}

impl PlatformConfig {
    /// Resource limits a packaged function gets unless it asks otherwise.
    pub fn default_limits(&self) -> ResourceLimits {
        ResourceLimits { max_concurrency: self.max_concurrency, invocation_timeout: self.invocation_timeout }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum PlatformError {
    #[error("function {0:?} is already deployed")]
    DuplicateName(String),
    #[error("unknown runtime {0:?}")]
    UnknownRuntime(String),
    #[error("prepare failed: {detail}")]
    PrepareFailed { detail: String, record: Option<Box<DeploymentRecord>> },
    #[error("start failed: {detail}")]
    StartFailed { detail: String, record: Box<DeploymentRecord> },
    #[error("function {0:?} not found")]
    NotFound(String),
    #[error("guest error: {0}")]
    GuestError(String),
    #[error("invocation timed out after {0:?}")]
    Timeout(Duration),
    #[error("another evaluation run holds this platform")]
    Busy,
}

impl PlatformError {
    /// The failed record for deploy errors that got as far as the registry.
    pub fn record(&self) -> Option<&DeploymentRecord> {
        match self {
            PlatformError::PrepareFailed { record, .. } => record.as_deref(),
            PlatformError::StartFailed { record, .. } => Some(record),
            _ => None,
        }
    }
}

struct Slot {
    record: DeploymentRecord,
    unit: Option<Arc<dyn RunningUnit>>,
    limiter: Arc<Semaphore>,
    logs: LogSink,
    workdir: Option<PathBuf>,
}

struct Inner {
    config: PlatformConfig,
    adapters: HashMap<String, Arc<dyn RuntimeAdapter>>,
    slots: RwLock<HashMap<String, Slot>>,
    name_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    root: PathBuf,
    _tempdir: Option<tempfile::TempDir>,
    seq: AtomicU64,
    run_lock: Arc<tokio::sync::Mutex<()>>,
}

impl Drop for Inner {
    fn drop(&mut self) {
        // Child handles are kill-on-drop; working directories go with the
        // temp dir, or are removed here for a configured work_dir.
        if self._tempdir.is_none() {
            for slot in self.slots.get_mut().unwrap().values() {
                if let Some(dir) = &slot.workdir {
                    let _ = std::fs::remove_dir_all(dir);
                }
            }
        }
    }
}

/// Cheaply cloneable handle to one platform instance.
#[derive(Clone)]
pub struct Platform {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Platform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Platform").field("root", &self.inner.root).finish_non_exhaustive()
    }
}

impl Platform {
    /// Builds a platform with the built-in adapters named in `config.adapters`.
    pub fn new(config: PlatformConfig) -> std::io::Result<Self> {
        let mut adapters: Vec<Arc<dyn RuntimeAdapter>> = Vec::new();
        for id in &config.adapters {
            let (language, program) = match id.as_str() {
                PYTHON3 => (GuestLanguage::Python, &config.python_bin),
                NODEJS => (GuestLanguage::JavaScript, &config.node_bin),
                _ => continue,
            };
            adapters.push(Arc::new(
                SubprocessAdapter::custom(id.clone(), language, program.clone())
                    .with_dependency_install(config.install_dependencies),
            ));
        }
        Self::with_adapters(config, adapters)
    }

    /// Builds a platform with an explicit adapter set (e.g. custom runtimes).
    pub fn with_adapters(config: PlatformConfig, adapters: Vec<Arc<dyn RuntimeAdapter>>) -> std::io::Result<Self> {
        let (root, tempdir) = match &config.work_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                (dir.clone(), None)
            }
            None => {
                let t = tempfile::Builder::new().prefix("faasforge-").tempdir()?;
                (t.path().to_path_buf(), Some(t))
            }
        };
        let adapters = adapters.into_iter().map(|a| (a.identifier().to_string(), a)).collect();
        Ok(Self {
            inner: Arc::new(Inner {
                config,
                adapters,
                slots: RwLock::new(HashMap::new()),
                name_locks: Mutex::new(HashMap::new()),
                root,
                _tempdir: tempdir,
                seq: AtomicU64::new(0),
                run_lock: Arc::new(tokio::sync::Mutex::new(())),
            }),
        })
    }

    pub fn config(&self) -> &PlatformConfig {
        &self.inner.config
    }

    pub fn runtimes(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.inner.adapters.keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Exclusive run lock for evaluation runs; fails fast if already held.
    pub fn try_run_lock(&self) -> Result<OwnedMutexGuard<()>, PlatformError> {
        self.inner.run_lock.clone().try_lock_owned().map_err(|_| PlatformError::Busy)
    }

    async fn lock_name(&self, name: &str) -> OwnedMutexGuard<()> {
        let lock = {
            let mut locks = self.inner.name_locks.lock().unwrap();
            locks.entry(name.to_string()).or_default().clone()
        };
        lock.lock_owned().await
    }

    fn store(&self, name: &str, update: impl FnOnce(&mut Slot)) {
        if let Some(slot) = self.inner.slots.write().unwrap().get_mut(name) {
            update(slot);
        }
    }

    /// Registers and starts a function.
    ///
    /// Prepare and start failures leave a `Failed` record in the registry and
    /// return it inside the error.
    pub async fn deploy(&self, descriptor: FunctionDescriptor) -> Result<DeploymentRecord, PlatformError> {
        descriptor.validate().map_err(|detail| PlatformError::PrepareFailed { detail, record: None })?;
        let adapter = self
            .inner
            .adapters
            .get(&descriptor.runtime)
            .cloned()
            .ok_or_else(|| PlatformError::UnknownRuntime(descriptor.runtime.clone()))?;
        let name = descriptor.name.clone();
        let _guard = self.lock_name(&name).await;
        let deadline = Instant::now() + self.inner.config.deploy_timeout;

        let mut record = DeploymentRecord::new(descriptor);
        let logs: LogSink = Arc::new(Mutex::new(LogRing::new(self.inner.config.log_capacity)));
        let workdir = self.inner.root.join(format!("{name}-{}", self.inner.seq.fetch_add(1, Ordering::SeqCst)));
        {
            let mut slots = self.inner.slots.write().unwrap();
            if slots.get(&name).is_some_and(|s| s.record.status.is_active()) {
                return Err(PlatformError::DuplicateName(name));
            }
            if let Some(old) = slots.get(&name).and_then(|s| s.workdir.clone()) {
                let _ = std::fs::remove_dir_all(old);
            }
            record.transition(DeploymentStatus::Preparing).expect("pending -> preparing");
            slots.insert(
                name.clone(),
                Slot {
                    record: record.clone(),
                    unit: None,
                    limiter: Arc::new(Semaphore::new(record.descriptor.resource_limits.max_concurrency as usize)),
                    logs: logs.clone(),
                    workdir: Some(workdir.clone()),
                },
            );
        }

        let remaining = || deadline.saturating_duration_since(Instant::now());
        let prepared = match tokio::time::timeout(remaining(), adapter.prepare(&record.descriptor, &workdir)).await {
            Ok(Ok(p)) => p,
            Ok(Err(e)) => return Err(self.fail_prepare(&name, record, e.to_string())),
            Err(_) => {
                let detail = format!("prepare exceeded deploy timeout {:?}", self.inner.config.deploy_timeout);
                return Err(self.fail_prepare(&name, record, detail));
            }
        };

        let unit = match adapter.start(prepared, remaining(), logs.clone()).await {
            Ok(u) => u,
            Err(e) => {
                let detail = match e {
                    AdapterError::Start(d) => d,
                    other => other.to_string(),
                };
                record.fail(detail.clone()).expect("preparing -> failed");
                logs.lock().unwrap().push(LogStream::Stderr, format!("deploy failed: {detail}"));
                self.store(&name, |s| s.record = record.clone());
                return Err(PlatformError::StartFailed { detail, record: Box::new(record) });
            }
        };

        record.transition(DeploymentStatus::Running).expect("preparing -> running");
        record.port = unit.port();
        self.store(&name, |s| {
            s.record = record.clone();
            s.unit = Some(unit);
        });
        tracing::info!(function = %name, port = ?record.port, "deployed");
        Ok(record)
    }

    fn fail_prepare(&self, name: &str, mut record: DeploymentRecord, detail: String) -> PlatformError {
        record.fail(detail.clone()).expect("preparing -> failed");
        self.store(name, |s| s.record = record.clone());
        PlatformError::PrepareFailed { detail, record: Some(Box::new(record)) }
    }

    /// Runs the handler once. Waits for a concurrency slot, bounded by the
    /// function's invocation timeout.
    pub async fn invoke(&self, name: &str, request: Invocation) -> Result<InvocationResponse, PlatformError> {
        let (unit, limiter, logs, timeout) = {
            let slots = self.inner.slots.read().unwrap();
            let slot = slots
                .get(name)
                .filter(|s| s.record.status == DeploymentStatus::Running)
                .ok_or_else(|| PlatformError::NotFound(name.into()))?;
            let unit = slot.unit.clone().ok_or_else(|| PlatformError::NotFound(name.into()))?;
            (unit, slot.limiter.clone(), slot.logs.clone(), slot.record.descriptor.resource_limits.invocation_timeout)
        };
        let started = Instant::now();
        let _permit = tokio::time::timeout(timeout, limiter.acquire_owned())
            .await
            .map_err(|_| PlatformError::Timeout(timeout))?
            .map_err(|_| PlatformError::NotFound(name.into()))?;
        let left = timeout.saturating_sub(started.elapsed());
        let result = unit.invoke(request, left).await;
        let elapsed_ms = started.elapsed().as_secs_f64() * 1000.0;
        let (entry, mapped) = match result {
            Ok(resp) => (format!("status={} duration_ms={elapsed_ms:.1}", resp.status), Ok(resp)),
            Err(AdapterError::Guest(detail)) => {
                (format!("guest error duration_ms={elapsed_ms:.1}"), Err(PlatformError::GuestError(detail)))
            }
            Err(AdapterError::Timeout(_)) => {
                (format!("timeout duration_ms={elapsed_ms:.1}"), Err(PlatformError::Timeout(timeout)))
            }
            Err(AdapterError::NotRunning) => ("not running".into(), Err(PlatformError::NotFound(name.into()))),
            Err(other) => (other.to_string(), Err(PlatformError::GuestError(other.to_string()))),
        };
        logs.lock().unwrap().push(LogStream::Invocation, entry);
        mapped
    }

    /// Stops a function and frees its endpoint. Removing an unknown or
    /// already removed function is `NotFound`.
    pub async fn remove(&self, name: &str) -> Result<DeploymentRecord, PlatformError> {
        let _guard = self.lock_name(name).await;
        let (unit, workdir, mut record) = {
            let mut slots = self.inner.slots.write().unwrap();
            let slot = slots
                .get_mut(name)
                .filter(|s| matches!(s.record.status, DeploymentStatus::Running | DeploymentStatus::Failed))
                .ok_or_else(|| PlatformError::NotFound(name.into()))?;
            (slot.unit.take(), slot.workdir.take(), slot.record.clone())
        };
        if let Some(unit) = unit {
            unit.stop().await;
        }
        if let Some(dir) = workdir {
            let _ = tokio::fs::remove_dir_all(dir).await;
        }
        record.transition(DeploymentStatus::Removed).expect("running|failed -> removed");
        self.store(name, |s| s.record = record.clone());
        tracing::info!(function = %name, "removed");
        Ok(record)
    }

    pub fn list(&self) -> Vec<DeploymentRecord> {
        let mut records: Vec<DeploymentRecord> =
            self.inner.slots.read().unwrap().values().map(|s| s.record.clone()).collect();
        records.sort_by(|a, b| a.descriptor.name.cmp(&b.descriptor.name));
        records
    }

    pub fn get(&self, name: &str) -> Option<DeploymentRecord> {
        self.inner.slots.read().unwrap().get(name).map(|s| s.record.clone())
    }

    /// True when a record with this name exists and has not been removed.
    pub fn is_taken(&self, name: &str) -> bool {
        self.get(name).is_some_and(|r| r.status != DeploymentStatus::Removed)
    }

    pub fn logs(&self, name: &str) -> Result<Vec<LogEntry>, PlatformError> {
        let slots = self.inner.slots.read().unwrap();
        let slot = slots.get(name).ok_or_else(|| PlatformError::NotFound(name.into()))?;
        let entries = slot.logs.lock().unwrap().entries();
        Ok(entries)
    }

    /// OS process id of a running function's guest.
    pub fn guest_pid(&self, name: &str) -> Option<u32> {
        self.inner.slots.read().unwrap().get(name).and_then(|s| s.unit.as_ref()).and_then(|u| u.pid())
    }

    /// Removes every running or failed function.
    pub async fn shutdown(&self) {
        let names: Vec<String> = self
            .list()
            .into_iter()
            .filter(|r| matches!(r.status, DeploymentStatus::Running | DeploymentStatus::Failed))
            .map(|r| r.descriptor.name)
            .collect();
        for name in names {
            let _ = self.remove(&name).await;
        }
    }
}
