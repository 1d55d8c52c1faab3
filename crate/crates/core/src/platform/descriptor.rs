use std::collections::BTreeMap;
use std::sync::LazyLock;
use std::time::Duration;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

static NAME_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[a-z0-9][a-z0-9-]{0,62}$").unwrap());

pub fn is_valid_name(name: &str) -> bool {
    NAME_RE.is_match(name)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceLimits {
    pub max_concurrency: u32,
    #[serde(with = "crate::serde_util::duration_ms", rename = "invocation_timeout_ms")]
    pub invocation_timeout: Duration,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        Self { max_concurrency: 16, invocation_timeout: Duration::from_secs(10) }
    }
}

/// A deployable unit. Source files travel base64-encoded on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDescriptor {
    pub name: String,
    pub runtime: String,
    #[serde(with = "crate::serde_util::base64_files")]
    pub source_bundle: BTreeMap<String, Vec<u8>>,
    pub entry_point: String,
    #[serde(default)]
    pub dependencies: Vec<String>,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    #[serde(default)]
    pub resource_limits: ResourceLimits,
}

impl FunctionDescriptor {
    /// Checks the structural invariants. Runtime registration is checked by
    /// the platform, which knows its adapters.
    pub fn validate(&self) -> Result<(), String> {
        if !is_valid_name(&self.name) {
            return Err(format!("invalid function name {:?}", self.name));
        }
        if self.source_bundle.is_empty() {
            return Err("source bundle is empty".into());
        }
        if self.entry_point.trim().is_empty() {
            return Err("entry point is empty".into());
        }
        for path in self.source_bundle.keys() {
            let p = std::path::Path::new(path);
            let escapes = p.is_absolute()
                || p.components().any(|c| !matches!(c, std::path::Component::Normal(_)));
            if path.is_empty() || escapes {
                return Err(format!("bundle path {path:?} must be relative and stay inside the bundle"));
            }
        }
        if self.resource_limits.max_concurrency == 0 {
            return Err("max_concurrency must be positive".into());
        }
        if self.resource_limits.invocation_timeout.is_zero() {
            return Err("invocation_timeout must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeploymentStatus {
    Pending,
    Preparing,
    Running,
    Failed,
    Removed,
}

impl DeploymentStatus {
    pub fn can_transition_to(self, next: DeploymentStatus) -> bool {
        use DeploymentStatus::*;
        matches!(
            (self, next),
            (Pending, Preparing) | (Preparing, Running) | (Preparing, Failed) | (Running, Removed) | (Failed, Removed)
        )
    }

    /// Whether a record in this state blocks a new deployment of the same name.
    pub fn is_active(self) -> bool {
        matches!(self, DeploymentStatus::Pending | DeploymentStatus::Preparing | DeploymentStatus::Running)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentRecord {
    pub descriptor: FunctionDescriptor,
    pub status: DeploymentStatus,
    pub endpoint_path: Option<String>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub failure_detail: Option<String>,
    /// Loopback port of the guest process while running.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("illegal status transition {from:?} -> {to:?}")]
pub struct IllegalTransition {
    pub from: DeploymentStatus,
    pub to: DeploymentStatus,
}

impl DeploymentRecord {
    pub fn new(descriptor: FunctionDescriptor) -> Self {
        let now = Utc::now();
        Self {
            descriptor,
            status: DeploymentStatus::Pending,
            endpoint_path: None,
            created_at: now,
            updated_at: now,
            failure_detail: None,
            port: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.descriptor.name
    }

    /// Moves along the lifecycle, keeping `endpoint_path` set exactly while
    /// the record is `Running`.
    pub fn transition(&mut self, to: DeploymentStatus) -> Result<(), IllegalTransition> {
        if !self.status.can_transition_to(to) {
            return Err(IllegalTransition { from: self.status, to });
        }
        self.status = to;
        self.updated_at = Utc::now();
        if to == DeploymentStatus::Running {
            self.endpoint_path = Some(format!("/fn/{}", self.descriptor.name));
        } else {
            self.endpoint_path = None;
            self.port = None;
        }
        Ok(())
    }

    pub fn fail(&mut self, detail: impl Into<String>) -> Result<(), IllegalTransition> {
        self.transition(DeploymentStatus::Failed)?;
        self.failure_detail = Some(detail.into());
        Ok(())
    }
}
