//! TOML configuration shared by the binaries, with `FORGE_*` environment
//! overrides applied on top of the file.
//!
//! ```toml
//! [platform]
//! listen = "127.0.0.1:8080"
//! adapters = ["python3", "nodejs"]
//! deploy_timeout_secs = 30
//! invocation_timeout_secs = 10
//!
//! [provider]
//! kind = "mock"
//! fixtures_path = "fixtures/responses-python3.json"
//! seed = 42
//!
//! [bridge]
//! generation_attempts = 1
//!
//! [home]
//! listen = "127.0.0.1:8700"
//! ```

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::bridge::{BridgeOptions, PromptConstructor};
use crate::llm::{ProviderKind, ProviderSettings};
use crate::platform::PlatformConfig;
use crate::sim::DeviceState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BridgeSettings {
    /// Replaces the built-in system prompt template.
    pub prompt_template: Option<PathBuf>,
    pub generation_attempts: u32,
    pub validate_syntax: bool,
}

impl Default for BridgeSettings {
    fn default() -> Self {
        Self { prompt_template: None, generation_attempts: 1, validate_syntax: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HomeSettings {
    pub listen: String,
    /// Initial device state; the built-in home when unset.
    pub state: Option<PathBuf>,
}

impl Default for HomeSettings {
    fn default() -> Self {
        Self { listen: "127.0.0.1:8700".into(), state: None }
    }
}

impl HomeSettings {
    pub fn initial_state(&self) -> anyhow::Result<DeviceState> {
        match &self.state {
            None => Ok(DeviceState::default_home()),
            Some(path) => load_state(path),
        }
    }
}

pub fn load_state(path: &Path) -> anyhow::Result<DeviceState> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let state: DeviceState = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    state.validate().with_context(|| format!("invalid device state in {}", path.display()))?;
    Ok(state)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForgeConfig {
    pub platform: PlatformConfig,
    pub provider: ProviderSettings,
    pub bridge: BridgeSettings,
    pub home: HomeSettings,
}

impl ForgeConfig {
    /// Reads `path` (defaults when `None`) and applies the process
    /// environment.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let mut config = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Overrides fields from variables such as `FORGE_LISTEN` or
    /// `FORGE_PROVIDER`; `var` looks a name up.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> anyhow::Result<()> {
        fn parse<T: std::str::FromStr>(name: &str, raw: &str) -> anyhow::Result<T>
        where
            T::Err: std::fmt::Display,
        {
            raw.trim().parse().map_err(|e| anyhow::anyhow!("{name}={raw:?}: {e}"))
        }
        fn secs(name: &str, raw: &str) -> anyhow::Result<Duration> {
            let s: f64 = parse(name, raw)?;
            Duration::try_from_secs_f64(s).map_err(|e| anyhow::anyhow!("{name}={raw:?}: {e}"))
        }

        let p = &mut self.platform;
        if let Some(v) = var("FORGE_LISTEN") {
            p.listen = v;
        }
        if let Some(v) = var("FORGE_ADAPTERS") {
            p.adapters = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
        }
        if let Some(v) = var("FORGE_DEPLOY_TIMEOUT_SECS") {
            p.deploy_timeout = secs("FORGE_DEPLOY_TIMEOUT_SECS", &v)?;
        }
        if let Some(v) = var("FORGE_INVOCATION_TIMEOUT_SECS") {
            p.invocation_timeout = secs("FORGE_INVOCATION_TIMEOUT_SECS", &v)?;
        }
        if let Some(v) = var("FORGE_INSTALL_DEPENDENCIES") {
            p.install_dependencies = parse("FORGE_INSTALL_DEPENDENCIES", &v)?;
        }
        if let Some(v) = var("FORGE_WORK_DIR") {
            p.work_dir = Some(v.into());
        }
        if let Some(v) = var("FORGE_PYTHON") {
            p.python_bin = v;
        }
        if let Some(v) = var("FORGE_NODE") {
            p.node_bin = v;
        }

        let l = &mut self.provider;
        if let Some(v) = var("FORGE_PROVIDER") {
            l.kind = match v.trim().to_ascii_lowercase().as_str() {
                "live" => ProviderKind::Live,
                "mock" => ProviderKind::Mock,
                other => anyhow::bail!("FORGE_PROVIDER={other:?}: expected live or mock"),
            };
        }
        if let Some(v) = var("FORGE_LLM_ENDPOINT") {
            l.endpoint = v;
        }
        if let Some(v) = var("FORGE_LLM_MODEL") {
            l.model = v;
        }
        if let Some(v) = var("FORGE_MOCK_FIXTURES") {
            l.fixtures_path = Some(v.into());
        }
        if let Some(v) = var("FORGE_MOCK_SEED") {
            l.seed = parse("FORGE_MOCK_SEED", &v)?;
        }

        if let Some(v) = var("FORGE_PROMPT_TEMPLATE") {
            self.bridge.prompt_template = Some(v.into());
        }
        if let Some(v) = var("FORGE_HOME_LISTEN") {
            self.home.listen = v;
        }
        Ok(())
    }

    pub fn listen_addr(&self) -> anyhow::Result<SocketAddr> {
        self.platform.listen.parse().with_context(|| format!("platform.listen {:?}", self.platform.listen))
    }

    pub fn home_addr(&self) -> anyhow::Result<SocketAddr> {
        self.home.listen.parse().with_context(|| format!("home.listen {:?}", self.home.listen))
    }

    /// Bridge options matching the platform limits. The device API URL is
    /// left at its default; callers that start a simulator set it.
    pub fn bridge_options(&self) -> BridgeOptions {
        let mut options = BridgeOptions {
            generation_attempts: self.bridge.generation_attempts.max(1),
            validate_syntax: self.bridge.validate_syntax,
            python_bin: self.platform.python_bin.clone(),
            node_bin: self.platform.node_bin.clone(),
            ..Default::default()
        };
        options.package.limits = self.platform.default_limits();
        options
    }

    pub fn prompts(&self) -> anyhow::Result<PromptConstructor> {
        match &self.bridge.prompt_template {
            None => Ok(PromptConstructor::default()),
            Some(path) => PromptConstructor::from_template_file(path)
                .with_context(|| format!("loading prompt template {}", path.display())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn file_then_env() {
        let mut c = ForgeConfig::from_toml(
            "[platform]\nlisten = \"0.0.0.0:9000\"\ninvocation_timeout_secs = 2.5\n\n[provider]\nkind = \"mock\"\nseed = 42\n",
        )
        .unwrap();
        assert_eq!(c.platform.invocation_timeout, Duration::from_millis(2500));
        assert_eq!(c.platform.deploy_timeout, Duration::from_secs(30));
        assert_eq!(c.provider.seed, 42);
        assert_eq!(c.provider.temperature, 0.7);

        let env: HashMap<&str, &str> =
            [("FORGE_LISTEN", "127.0.0.1:1"), ("FORGE_ADAPTERS", "python3"), ("FORGE_PROVIDER", "live")].into();
        c.apply_env(|k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(c.listen_addr().unwrap().port(), 1);
        assert_eq!(c.platform.adapters, vec!["python3"]);
        assert_eq!(c.provider.kind, ProviderKind::Live);
    }

    #[test]
    fn bad_values_are_errors() {
        let mut c = ForgeConfig::default();
        assert!(c.apply_env(|k| (k == "FORGE_DEPLOY_TIMEOUT_SECS").then(|| "soon".into())).is_err());
        assert!(c.apply_env(|k| (k == "FORGE_PROVIDER").then(|| "magic".into())).is_err());
        assert!(ForgeConfig::from_toml("[platform]\nlisten = 3\n").is_err());
    }
}
