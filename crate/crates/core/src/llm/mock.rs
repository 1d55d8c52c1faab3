use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LlmConfig, LlmProvider, LlmResponse, ProviderErrorKind};
use crate::bridge::StructuredPrompt;

/// One canned response: either completion text or a provider failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockVariant {
    Text(String),
    Error {
        error: ProviderErrorKind,
        #[serde(default)]
        detail: String,
    },
}

/// Task key → response variants. The key `"default"` is used for prompts
/// whose task id has no entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockFixtures(pub BTreeMap<String, Vec<MockVariant>>);

impl MockFixtures {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("reading mock fixtures {}: {e}", path.display()))?;
        let fixtures: Self = serde_json::from_str(&raw)
            .map_err(|e| anyhow::anyhow!("parsing mock fixtures {}: {e}", path.display()))?;
        if let Some((key, _)) = fixtures.0.iter().find(|(_, v)| v.is_empty()) {
            anyhow::bail!("mock fixture {key:?} has no variants");
        }
        Ok(fixtures)
    }

    pub fn insert(&mut self, key: impl Into<String>, variants: Vec<MockVariant>) {
        self.0.insert(key.into(), variants);
    }
}

/// Deterministic provider: each call draws a variant index from a seeded
/// ChaCha8 stream, so a (fixtures, seed, call order) triple always yields the
/// same sequence of responses.
pub struct MockProvider {
    fixtures: MockFixtures,
    delay: Duration,
    state: Mutex<MockState>,
}

struct MockState {
    rng: ChaCha8Rng,
    draws: Vec<(String, usize)>,
}

impl MockProvider {
    pub fn new(fixtures: MockFixtures, seed: u64, delay: Duration) -> Self {
        Self {
            fixtures,
            delay,
            state: Mutex::new(MockState { rng: ChaCha8Rng::seed_from_u64(seed), draws: Vec::new() }),
        }
    }

    /// Single fixed response for every prompt.
    pub fn constant(text: impl Into<String>) -> Self {
        let mut f = MockFixtures::default();
        f.insert("default", vec![MockVariant::Text(text.into())]);
        Self::new(f, 0, Duration::ZERO)
    }

    /// (task key, variant index) for every call so far.
    pub fn draws(&self) -> Vec<(String, usize)> {
        self.state.lock().unwrap().draws.clone()
    }

    fn draw(&self, prompt: &StructuredPrompt) -> Option<MockVariant> {
        let key = prompt
            .task_id
            .as_deref()
            .filter(|k| self.fixtures.0.contains_key(*k))
            .unwrap_or("default");
        let variants = self.fixtures.0.get(key)?;
        let mut state = self.state.lock().unwrap();
        let idx = state.rng.random_range(0..variants.len());
        state.draws.push((key.to_string(), idx));
        Some(variants[idx].clone())
    }
}

#[async_trait]
impl LlmProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    async fn complete(&self, prompt: &StructuredPrompt, _config: &LlmConfig) -> LlmResponse {
        let started = Instant::now();
        let variant = self.draw(prompt);
        if !self.delay.is_zero() {
            tokio::time::sleep(self.delay).await;
        }
        let elapsed = started.elapsed();
        match variant {
            None => LlmResponse::failed(
                ProviderErrorKind::Transport,
                format!("mock: no fixture for task {:?}", prompt.task_id),
                elapsed,
            ),
            Some(MockVariant::Text(t)) => LlmResponse::ok(t, elapsed, None),
            Some(MockVariant::Error { error, detail }) => LlmResponse::failed(error, detail, elapsed),
        }
    }
}
