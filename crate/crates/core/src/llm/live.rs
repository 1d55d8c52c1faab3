use std::time::Instant;

use async_trait::async_trait;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{LlmConfig, LlmProvider, LlmResponse, ProviderErrorKind, TokenUsage};
use crate::bridge::StructuredPrompt;

/// Client for the `/chat/completions` API shared by OpenAI and compatible
/// servers. The key is read from `config.api_key_env_var` on every call.
#[derive(Debug, Clone, Default)]
pub struct OpenAiCompatible {
    client: reqwest::Client,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [Message<'a>; 2],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u32,
    #[serde(default)]
    completion_tokens: u32,
}

impl OpenAiCompatible {
    pub fn new() -> Self {
        Self { client: reqwest::Client::new() }
    }

    fn url(endpoint: &str) -> String {
        let base = endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

#[async_trait]
impl LlmProvider for OpenAiCompatible {
    fn name(&self) -> &str {
        "openai-compatible"
    }

    async fn complete(&self, prompt: &StructuredPrompt, config: &LlmConfig) -> LlmResponse {
        let body = ChatRequest {
            model: &config.model_id,
            messages: [
                Message { role: "system", content: &prompt.system_message },
                Message { role: "user", content: &prompt.user_message },
            ],
            temperature: config.temperature,
            max_tokens: config.max_tokens,
        };
        let mut req = self.client.post(Self::url(&config.endpoint_url)).timeout(config.request_timeout).json(&body);
        if let Ok(key) = std::env::var(&config.api_key_env_var) {
            req = req.bearer_auth(key);
        }

        let started = Instant::now();
        let result = async {
            let resp = req.send().await?;
            let status = resp.status();
            let text = resp.text().await?;
            Ok::<_, reqwest::Error>((status, text))
        }
        .await;
        let elapsed = started.elapsed();

        let (status, text) = match result {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return LlmResponse::failed(ProviderErrorKind::Timeout, e.to_string(), elapsed),
            Err(e) => return LlmResponse::failed(ProviderErrorKind::Transport, e.to_string(), elapsed),
        };
        if status == StatusCode::TOO_MANY_REQUESTS {
            return LlmResponse::failed(ProviderErrorKind::RateLimit, truncate(&text), elapsed);
        }
        if matches!(status, StatusCode::REQUEST_TIMEOUT | StatusCode::GATEWAY_TIMEOUT) {
            return LlmResponse::failed(ProviderErrorKind::Timeout, truncate(&text), elapsed);
        }
        if !status.is_success() {
            return LlmResponse::failed(ProviderErrorKind::Transport, format!("HTTP {status}: {}", truncate(&text)), elapsed);
        }
        let parsed: ChatResponse = match serde_json::from_str(&text) {
            Ok(p) => p,
            Err(e) => return LlmResponse::failed(ProviderErrorKind::Malformed, e.to_string(), elapsed),
        };
        let usage = parsed.usage.map(|u| TokenUsage { prompt: u.prompt_tokens, completion: u.completion_tokens });
        match parsed.choices.into_iter().next().and_then(|c| c.message.content) {
            Some(content) => LlmResponse::ok(content, elapsed, usage),
            None => LlmResponse::failed(ProviderErrorKind::Malformed, "response has no message content", elapsed),
        }
    }
}

fn truncate(s: &str) -> String {
    const MAX: usize = 500;
    match s.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}
