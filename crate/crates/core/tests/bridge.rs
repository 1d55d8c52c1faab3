use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use faasforge::bridge::service::BuildService;
use faasforge::bridge::{
    fence, Bridge, BridgeOptions, BuildErrorKind, BuildStage, FailureCategory, StageEvent, UserDescription,
};
use faasforge::llm::{LlmConfig, LlmProvider, MockFixtures, MockProvider, MockVariant, ProviderErrorKind};
use faasforge::platform::{DeploymentStatus, Invocation, Platform, PlatformConfig};
use faasforge::server::ephemeral;

const PY_DOUBLE: &str = "import json\n\n\ndef fn(input):\n    return json.dumps({\"n\": json.loads(input)[\"n\"] * 2})\n";

fn platform() -> Platform {
    Platform::new(PlatformConfig { install_dependencies: false, ..Default::default() }).unwrap()
}

fn bridge_with(provider: Arc<dyn LlmProvider>, platform: &Platform) -> Bridge {
    Bridge::new(provider, LlmConfig::default(), platform.clone(), BridgeOptions::default())
}

fn fixtures(entries: &[(&str, Vec<MockVariant>)]) -> MockFixtures {
    let mut f = MockFixtures::default();
    for (k, v) in entries {
        f.insert(*k, v.clone());
    }
    f
}

fn text(s: String) -> MockVariant {
    MockVariant::Text(s)
}

#[tokio::test]
async fn builds_deploys_and_dedupes_names() {
    let platform = platform();
    let bridge = bridge_with(Arc::new(MockProvider::constant(format!("Here you go:\n{}", fence(PY_DOUBLE, "python")))), &platform);
    let desc = UserDescription::new("Double the number n in the input.", "python3").with_task_id("Double It!");

    let events = Mutex::new(Vec::<StageEvent>::new());
    let first = bridge.build_with_progress(&desc, &|e| events.lock().unwrap().push(e)).await.unwrap();
    assert_eq!(first.record.name(), "double-it");
    assert_eq!(first.record.status, DeploymentStatus::Running);
    let stages: Vec<BuildStage> = events.lock().unwrap().iter().map(|e| e.stage).collect();
    assert_eq!(stages, [BuildStage::Prompting, BuildStage::Generating, BuildStage::Extracting, BuildStage::Deploying, BuildStage::Live]);
    let last = events.lock().unwrap().last().cloned().unwrap();
    assert_eq!(last.function.as_deref(), Some("double-it"));
    assert!(last.endpoint_path.is_some());

    let b = &first.breakdown;
    assert!(b.llm_generation.is_some() && b.function_preparation.is_some() && b.faas_deployment.is_some());
    assert!(b.stage_sum() <= b.total);
    assert!(b.total - b.stage_sum() < Duration::from_millis(5), "{b:?}");

    let second = bridge.build_and_deploy(&desc).await.unwrap();
    assert_eq!(second.record.name(), "double-it-2");
    let anon = bridge.build_and_deploy(&UserDescription::new("Double n.", "python3")).await.unwrap();
    assert!(anon.record.name().starts_with("fn-") && anon.record.name().len() == 11, "{}", anon.record.name());

    let resp = platform.invoke("double-it-2", Invocation { body: br#"{"n": 21}"#.to_vec().into(), content_type: None }).await.unwrap();
    let body: Value = serde_json::from_slice(&resp.body).unwrap();
    assert_eq!(body["n"], 42);
    platform.shutdown().await;
}

#[tokio::test]
async fn extraction_and_provider_failures() {
    let platform = platform();
    let cases: Vec<(&str, MockVariant, BuildErrorKind, FailureCategory)> = vec![
        ("prose", text("I would turn on the light when motion is detected.".into()), BuildErrorKind::ExtractionFailure, FailureCategory::NoCode),
        ("stub", text(fence("def helper(x):\n    return x\n", "python")), BuildErrorKind::ExtractionFailure, FailureCategory::MissingCode),
        ("limited", MockVariant::Error { error: ProviderErrorKind::RateLimit, detail: "429".into() }, BuildErrorKind::LlmError, FailureCategory::Other),
        ("slow", MockVariant::Error { error: ProviderErrorKind::Timeout, detail: "deadline".into() }, BuildErrorKind::LlmError, FailureCategory::Timeout),
        ("badimport", text(fence("import flux_capacitor_sdk\n\n\ndef fn(input):\n    return input\n", "python")), BuildErrorKind::DeployFailure, FailureCategory::ImportError),
    ];
    let table: Vec<(&str, Vec<MockVariant>)> = cases.iter().map(|(k, v, _, _)| (*k, vec![v.clone()])).collect();
    let provider = Arc::new(MockProvider::new(fixtures(&table), 1, Duration::ZERO));
    let bridge = bridge_with(provider, &platform);

    for (task, _, kind, category) in cases {
        let events = Mutex::new(Vec::<BuildStage>::new());
        let err = bridge
            .build_with_progress(&UserDescription::new("do it", "python3").with_task_id(task), &|e| events.lock().unwrap().push(e.stage))
            .await
            .unwrap_err();
        assert_eq!((err.kind, err.failure.category), (kind, category), "{task}: {}", err.failure.evidence);
        assert_eq!(events.lock().unwrap().last(), Some(&BuildStage::Failed), "{task}");
        match kind {
            BuildErrorKind::LlmError => assert!(err.artifact.is_none() && err.provider_error.is_some()),
            BuildErrorKind::ExtractionFailure => assert!(err.artifact.as_ref().unwrap().selected_code.is_none()),
            BuildErrorKind::DeployFailure => {
                assert_eq!(err.record.as_ref().unwrap().status, DeploymentStatus::Failed);
                assert!(err.failure.evidence.contains("flux_capacitor_sdk"));
            }
        }
    }
    let err = bridge.build_and_deploy(&UserDescription::new("   ", "python3")).await.unwrap_err();
    assert_eq!(err.kind, BuildErrorKind::LlmError);
    let err = bridge.build_and_deploy(&UserDescription::new("x", "cobol")).await.unwrap_err();
    assert!(err.failure.evidence.contains("cobol"));
    platform.shutdown().await;
}

#[tokio::test]
async fn retries_only_when_no_code_came_back() {
    let platform = platform();
    let table = [("t", vec![text("no code here".into()), text(fence(PY_DOUBLE, "python"))])];
    // First seed whose stream starts with the prose variant.
    let seed = (0..)
        .find(|s| ChaCha8Rng::seed_from_u64(*s).random_range(0..2usize) == 0)
        .unwrap();
    let provider = Arc::new(MockProvider::new(fixtures(&table), seed, Duration::ZERO));
    let mut bridge = bridge_with(provider.clone(), &platform);
    bridge.options.generation_attempts = 5;
    let events = Mutex::new(Vec::<BuildStage>::new());
    let out = bridge
        .build_with_progress(&UserDescription::new("x", "python3").with_task_id("t"), &|e| events.lock().unwrap().push(e.stage))
        .await
        .unwrap();
    let draws = provider.draws();
    assert!(draws.len() >= 2 && draws.last().unwrap().1 == 1 && draws[..draws.len() - 1].iter().all(|d| d.1 == 0), "{draws:?}");
    assert!(out.artifact.selected_code.is_some());
    let stages = events.lock().unwrap().clone();
    assert!(stages.windows(2).all(|w| w[0] < w[1]), "{stages:?}");
    platform.shutdown().await;
}

#[tokio::test]
async fn syntax_validation_rejects_before_deploy() {
    let platform = platform();
    let mut bridge = bridge_with(Arc::new(MockProvider::constant(fence("def fn(input):\n    return (\n", "python"))), &platform);
    bridge.options.validate_syntax = true;
    let err = bridge.build_and_deploy(&UserDescription::new("x", "python3")).await.unwrap_err();
    assert_eq!(err.kind, BuildErrorKind::ExtractionFailure);
    assert!(err.breakdown.faas_deployment.is_none());
    assert!(platform.list().is_empty());
    platform.shutdown().await;
}

#[tokio::test]
async fn dry_run_touches_nothing() {
    let platform = platform();
    let bridge = bridge_with(Arc::new(MockProvider::constant(fence(PY_DOUBLE, "python"))), &platform);
    let (prompt, artifact, breakdown) = bridge.dry_run(&UserDescription::new("Double n.", "python3")).await.unwrap();
    assert!(prompt.user_message.contains("Double n."));
    assert_eq!(artifact.selected_code.as_deref(), Some(PY_DOUBLE));
    assert!(breakdown.faas_deployment.is_none());
    assert!(platform.list().is_empty());
    platform.shutdown().await;
}

struct Service {
    base: String,
    platform: Platform,
    client: reqwest::Client,
    _task: tokio::task::JoinHandle<()>,
}

async fn service(provider: MockProvider) -> Service {
    let platform = platform();
    let svc = BuildService::new(Arc::new(bridge_with(Arc::new(provider), &platform)));
    let listener = tokio::net::TcpListener::bind(ephemeral()).await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let task = tokio::spawn(async move {
        axum::serve(listener, svc.router()).await.unwrap();
    });
    let client = reqwest::Client::builder().no_proxy().build().unwrap();
    Service { base, platform, client, _task: task }
}

/// Splits an SSE body into the JSON payloads of its `stage` events.
fn sse_stages(body: &str) -> Vec<Value> {
    body.split("\n\n")
        .filter(|frame| frame.lines().any(|l| l == "event: stage"))
        .map(|frame| {
            let data: String = frame.lines().filter_map(|l| l.strip_prefix("data: ")).collect();
            serde_json::from_str(&data).unwrap()
        })
        .collect()
}

#[tokio::test]
async fn build_endpoint_status_codes() {
    let table = [
        ("good", vec![text(fence(PY_DOUBLE, "python"))]),
        ("bad", vec![text("sorry".into())]),
    ];
    let s = service(MockProvider::new(fixtures(&table), 0, Duration::ZERO)).await;

    let resp = s.client.post(format!("{}/build", s.base)).json(&json!({"description": "double", "runtime": "python3", "task_id": "good"})).send().await.unwrap();
    assert_eq!(resp.status(), 201);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["record"]["descriptor"]["name"], "good");
    assert!(body["breakdown"]["total_ms"].as_f64().unwrap() > 0.0);
    let sid = body["session_id"].as_str().unwrap().to_string();

    let resp = s.client.post(format!("{}/build", s.base)).json(&json!({"description": "double", "runtime": "python3", "task_id": "bad"})).send().await.unwrap();
    assert_eq!(resp.status(), 422);
    let body: Value = resp.json().await.unwrap();
    assert_eq!(body["error"], "extraction_failure");
    assert_eq!(body["failure"]["category"], "NoCode");

    let resp = s.client.post(format!("{}/build", s.base)).json(&json!({"description": "", "runtime": "python3"})).send().await.unwrap();
    assert_eq!(resp.status(), 400);
    let resp = s.client.post(format!("{}/build", s.base)).json(&json!({"runtime": "python3"})).send().await.unwrap();
    assert!(resp.status().is_client_error());

    // Finished sessions still replay their whole history.
    let body = s.client.get(format!("{}/build/{sid}/events", s.base)).send().await.unwrap().text().await.unwrap();
    let events = sse_stages(&body);
    let stages: Vec<&str> = events.iter().map(|e| e["stage"].as_str().unwrap()).collect();
    assert_eq!(stages, ["prompting", "generating", "extracting", "deploying", "live"]);
    assert!(events.iter().enumerate().all(|(i, e)| e["seq"] == i && e["session_id"] == sid.as_str()));

    let resp = s.client.get(format!("{}/build/{sid}", s.base)).send().await.unwrap();
    assert_eq!(resp.status(), 201);
    assert_eq!(s.client.get(format!("{}/build/nope/events", s.base)).send().await.unwrap().status(), 404);
    assert_eq!(s.client.get(format!("{}/build/nope", s.base)).send().await.unwrap().status(), 404);
    s.platform.shutdown().await;
}

#[tokio::test]
async fn async_build_streams_stages_live() {
    let table = [("default", vec![text(fence(PY_DOUBLE, "python"))])];
    let s = service(MockProvider::new(fixtures(&table), 0, Duration::from_millis(300))).await;

    let resp = s.client.post(format!("{}/build", s.base)).json(&json!({"description": "double", "runtime": "python3", "async": true})).send().await.unwrap();
    assert_eq!(resp.status(), 202);
    let body: Value = resp.json().await.unwrap();
    let sid = body["session_id"].as_str().unwrap().to_string();
    assert_eq!(body["events"], format!("/build/{sid}/events"));

    let pending: Value = s.client.get(format!("{}/build/{sid}", s.base)).send().await.unwrap().json().await.unwrap();
    assert_eq!(pending["stage"], "generating");

    let resp = s.client.get(format!("{}{}", s.base, body["events"].as_str().unwrap())).send().await.unwrap();
    assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
    let events = sse_stages(&resp.text().await.unwrap());
    let stages: Vec<&str> = events.iter().map(|e| e["stage"].as_str().unwrap()).collect();
    assert_eq!(stages, ["prompting", "generating", "extracting", "deploying", "live"]);
    let elapsed: Vec<f64> = events.iter().map(|e| e["elapsed_ms"].as_f64().unwrap()).collect();
    assert!(elapsed.windows(2).all(|w| w[0] <= w[1]));
    assert!(events[4]["endpoint_path"].as_str().is_some());
    assert!(events[4]["breakdown"]["llm_generation_ms"].as_f64().unwrap() >= 290.0);

    let done = s.client.get(format!("{}/build/{sid}", s.base)).send().await.unwrap();
    assert_eq!(done.status(), 201);
    s.platform.shutdown().await;
}
