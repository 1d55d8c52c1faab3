//! Chat-completion providers behind one trait: a live client for any
//! OpenAI-compatible endpoint and a deterministic mock for offline runs.

mod live;
mod mock;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

pub use live::OpenAiCompatible;
pub use mock::{MockFixtures, MockProvider, MockVariant};

use crate::bridge::StructuredPrompt;

pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_MAX_TOKENS: u32 = 1500;
pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint_url: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(with = "crate::serde_util::duration_secs_f64", rename = "request_timeout_secs")]
    pub request_timeout: Duration,
    pub api_key_env_var: String,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "https://api.openai.com/v1".into(),
            model_id: "gpt-4o".into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            request_timeout: DEFAULT_REQUEST_TIMEOUT,
            api_key_env_var: "OPENAI_API_KEY".into(),
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.max_tokens < 1 {
            return Err("max_tokens must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderErrorKind {
    Transport,
    RateLimit,
    Timeout,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{kind:?}: {detail}")]
pub struct ProviderError {
    pub kind: ProviderErrorKind,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: u32,
    pub completion: u32,
}

/// Result of one completion call. Exactly one of non-empty `text` and
/// `provider_error` is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    #[serde(with = "crate::serde_util::duration_ms")]
    pub generation_duration: Duration,
    pub token_usage: Option<TokenUsage>,
    pub provider_error: Option<ProviderError>,
}

impl LlmResponse {
    /// An empty completion is reported as `Malformed` to keep the invariant.
    pub fn ok(text: String, generation_duration: Duration, token_usage: Option<TokenUsage>) -> Self {
        if text.is_empty() {
            return Self::failed(ProviderErrorKind::Malformed, "empty completion", generation_duration);
        }
        Self { text, generation_duration, token_usage, provider_error: None }
    }

    pub fn failed(kind: ProviderErrorKind, detail: impl Into<String>, generation_duration: Duration) -> Self {
        Self {
            text: String::new(),
            generation_duration,
            token_usage: None,
            provider_error: Some(ProviderError { kind, detail: detail.into() }),
        }
    }

    pub fn into_result(self) -> Result<(String, Duration), (ProviderError, Duration)> {
        match self.provider_error {
            None => Ok((self.text, self.generation_duration)),
            Some(e) => Err((e, self.generation_duration)),
        }
    }
}

#[async_trait]
pub trait LlmProvider: Send + Sync {
    fn name(&self) -> &str;

    /// Sends the prompt and waits for the completion. `generation_duration`
    /// covers the provider call only.
    async fn complete(&self, prompt: &StructuredPrompt, config: &LlmConfig) -> LlmResponse;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Live,
    #[default]
    Mock,
}

/// The `[provider]` section of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSettings {
    pub kind: ProviderKind,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: f64,
    pub api_key_env: String,
    pub fixtures_path: Option<PathBuf>,
    pub seed: u64,
    pub delay_ms: u64,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        let c = LlmConfig::default();
        Self {
            kind: ProviderKind::Mock,
            endpoint: c.endpoint_url,
            model: c.model_id,
            temperature: c.temperature,
            max_tokens: c.max_tokens,
            timeout_secs: c.request_timeout.as_secs_f64(),
            api_key_env: c.api_key_env_var,
            fixtures_path: None,
            seed: 0,
            delay_ms: 0,
        }
    }
}

impl ProviderSettings {
    pub fn llm_config(&self) -> LlmConfig {
        LlmConfig {
            endpoint_url: self.endpoint.clone(),
            model_id: self.model.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            request_timeout: Duration::from_secs_f64(self.timeout_secs),
            api_key_env_var: self.api_key_env.clone(),
        }
    }

    pub fn build(&self) -> anyhow::Result<Arc<dyn LlmProvider>> {
        self.llm_config().validate().map_err(anyhow::Error::msg)?;
        Ok(match self.kind {
            ProviderKind::Live => Arc::new(OpenAiCompatible::new()),
            ProviderKind::Mock => {
                let path = self
                    .fixtures_path
                    .as_ref()
                    .ok_or_else(|| anyhow::anyhow!("mock provider needs fixtures_path"))?;
                let fixtures = MockFixtures::load(path)?;
                Arc::new(MockProvider::new(fixtures, self.seed, Duration::from_millis(self.delay_ms)))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_prototype_configuration() {
        let c = LlmConfig::default();
        assert_eq!(c.temperature, 0.7);
        assert_eq!(c.max_tokens, 1500);
        assert_eq!(c.request_timeout, Duration::from_secs(60));
        let parsed: LlmConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(parsed, c);
    }

    #[test]
    fn config_ranges() {
        let mut c = LlmConfig { temperature: 2.5, ..Default::default() };
        assert!(c.validate().is_err());
        c.temperature = 0.0;
        c.max_tokens = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn empty_text_is_not_a_success() {
        let r = LlmResponse::ok(String::new(), Duration::ZERO, None);
        assert_eq!(r.provider_error.unwrap().kind, ProviderErrorKind::Malformed);
    }
}
