use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use faasforge::bridge::{PromptConstructor, StructuredPrompt, UserDescription};
use faasforge::llm::{LlmConfig, LlmProvider, MockFixtures, MockProvider, MockVariant, OpenAiCompatible, ProviderErrorKind};
use faasforge::server::{ephemeral, BackgroundServer};

#[derive(Clone, Default)]
struct Seen {
    body: Arc<Mutex<Option<Value>>>,
    auth: Arc<Mutex<Option<String>>>,
}

async fn fake_server(mode: &'static str, seen: Seen) -> BackgroundServer {
    let app = Router::new()
        .route(
            "/v1/chat/completions",
            post(move |State(seen): State<Seen>, headers: HeaderMap, Json(body): Json<Value>| async move {
                *seen.body.lock().unwrap() = Some(body);
                *seen.auth.lock().unwrap() = headers.get("authorization").map(|v| v.to_str().unwrap().to_string());
                match mode {
                    "ok" => (
                        StatusCode::OK,
                        json!({"choices": [{"message": {"role": "assistant", "content": "```python\ndef fn(input):\n    return 1\n```"}}],
                               "usage": {"prompt_tokens": 120, "completion_tokens": 30}})
                        .to_string(),
                    ),
                    "429" => (StatusCode::TOO_MANY_REQUESTS, "{\"error\": \"slow down\"}".into()),
                    "401" => (StatusCode::UNAUTHORIZED, "{\"error\": \"bad key\"}".into()),
                    "garbage" => (StatusCode::OK, "not json".into()),
                    "empty" => (StatusCode::OK, json!({"choices": []}).to_string()),
                    "slow" => {
                        tokio::time::sleep(Duration::from_secs(3)).await;
                        (StatusCode::OK, "{}".into())
                    }
                    _ => unreachable!(),
                }
            }),
        )
        .with_state(seen);
    BackgroundServer::start(app, ephemeral()).await.unwrap()
}

fn prompt() -> StructuredPrompt {
    PromptConstructor::default().construct(&UserDescription::new("Turn on the kitchen light.", "python3").with_task_id("easy-03")).unwrap()
}

fn config(server: &BackgroundServer) -> LlmConfig {
    LlmConfig { endpoint_url: format!("{}/v1", server.base_url()), model_id: "test-model".into(), ..Default::default() }
}

#[tokio::test]
async fn live_request_shape_and_success() {
    let seen = Seen::default();
    let server = fake_server("ok", seen.clone()).await;
    let mut cfg = config(&server);
    cfg.api_key_env_var = "FAASFORGE_TEST_KEY_LIVE_OK".into();
    std::env::set_var("FAASFORGE_TEST_KEY_LIVE_OK", "sk-test");
    let p = prompt();
    let resp = OpenAiCompatible::new().complete(&p, &cfg).await;

    assert!(resp.provider_error.is_none(), "{resp:?}");
    assert!(resp.text.contains("def fn"));
    assert_eq!(resp.token_usage.unwrap().completion, 30);
    assert!(resp.generation_duration > Duration::ZERO);

    let body = seen.body.lock().unwrap().clone().unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0.7);
    assert_eq!(body["max_tokens"], 1500);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][0]["content"], p.system_message.as_str());
    assert_eq!(body["messages"][1]["role"], "user");
    assert_eq!(seen.auth.lock().unwrap().as_deref(), Some("Bearer sk-test"));

    // A full path in the endpoint is used as is.
    cfg.endpoint_url = format!("{}/v1/chat/completions", server.base_url());
    assert!(OpenAiCompatible::new().complete(&p, &cfg).await.provider_error.is_none());
}

#[tokio::test]
async fn live_error_kinds() {
    let p = prompt();
    for (mode, kind) in [
        ("429", ProviderErrorKind::RateLimit),
        ("401", ProviderErrorKind::Transport),
        ("garbage", ProviderErrorKind::Malformed),
        ("empty", ProviderErrorKind::Malformed),
    ] {
        let server = fake_server(mode, Seen::default()).await;
        let resp = OpenAiCompatible::new().complete(&p, &config(&server)).await;
        let err = resp.provider_error.unwrap_or_else(|| panic!("{mode}: expected an error"));
        assert_eq!(err.kind, kind, "{mode}: {}", err.detail);
        assert!(resp.text.is_empty());
        if mode == "401" {
            assert!(err.detail.contains("401"), "{}", err.detail);
        }
    }
}

#[tokio::test]
async fn live_timeout_and_refused() {
    let p = prompt();
    let server = fake_server("slow", Seen::default()).await;
    let mut cfg = config(&server);
    cfg.request_timeout = Duration::from_millis(200);
    let started = Instant::now();
    let resp = OpenAiCompatible::new().complete(&p, &cfg).await;
    assert_eq!(resp.provider_error.unwrap().kind, ProviderErrorKind::Timeout);
    assert!(started.elapsed() < Duration::from_secs(2));

    let addr = server.addr();
    server.stop().await;
    let cfg = LlmConfig { endpoint_url: format!("http://{addr}/v1"), ..Default::default() };
    assert_eq!(OpenAiCompatible::new().complete(&p, &cfg).await.provider_error.unwrap().kind, ProviderErrorKind::Transport);
}

#[tokio::test]
async fn mock_delay_keys_and_errors() {
    let mut fixtures = MockFixtures::default();
    fixtures.insert("easy-03", vec![MockVariant::Text("kitchen".into())]);
    fixtures.insert("default", vec![MockVariant::Error { error: ProviderErrorKind::RateLimit, detail: "quota".into() }]);
    let mock = MockProvider::new(fixtures, 1, Duration::from_millis(60));
    let cfg = LlmConfig::default();

    let resp = mock.complete(&prompt(), &cfg).await;
    assert_eq!(resp.text, "kitchen");
    assert!(resp.generation_duration >= Duration::from_millis(60));
    assert!(resp.generation_duration < Duration::from_millis(200));

    let other = PromptConstructor::default().construct(&UserDescription::new("Lock the door.", "python3")).unwrap();
    let resp = mock.complete(&other, &cfg).await;
    assert_eq!(resp.provider_error.unwrap().kind, ProviderErrorKind::RateLimit);
    assert_eq!(mock.draws(), vec![("easy-03".to_string(), 0), ("default".to_string(), 0)]);
}

#[tokio::test]
async fn mock_same_seed_same_sequence() {
    let variants: Vec<MockVariant> = (0..5).map(|i| MockVariant::Text(format!("v{i}"))).collect();
    let run = |seed| {
        let variants = variants.clone();
        async move {
            let mut f = MockFixtures::default();
            f.insert("easy-03", variants);
            let m = MockProvider::new(f, seed, Duration::ZERO);
            let mut out = Vec::new();
            for _ in 0..20 {
                out.push(m.complete(&prompt(), &LlmConfig::default()).await.text);
            }
            out
        }
    };
    let a = run(42).await;
    assert_eq!(a, run(42).await);
    assert_ne!(a, run(43).await);
    assert!(a.iter().collect::<std::collections::HashSet<_>>().len() > 1);
}

#[test]
fn defaults_are_pinned() {
    let c = LlmConfig::default();
    assert_eq!(c.temperature, 0.7);
    assert_eq!(c.max_tokens, 1500);
}
