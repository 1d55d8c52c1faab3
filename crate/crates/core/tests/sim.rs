use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use faasforge::bridge::{fence, Bridge, BridgeOptions, UserDescription};
use faasforge::llm::{LlmConfig, MockProvider};
use faasforge::platform::{GatewayServer, Platform, PlatformConfig};
use faasforge::server::ephemeral;
use faasforge::sim::{run_test, test_client, HomeSimulator, RunError, SemanticTestCase, SimServer};

fn client() -> reqwest::Client {
    test_client(Duration::from_secs(15))
}

#[tokio::test]
async fn device_api_over_http() {
    let server = SimServer::start(Arc::new(HomeSimulator::default()), ephemeral()).await.unwrap();
    let base = server.base_url();
    let c = client();

    let devices: Value = c.get(format!("{base}/devices")).send().await.unwrap().json().await.unwrap();
    assert_eq!(devices["thermostat"]["attributes"]["target_temp"], 20.0);
    let v: Value = c.get(format!("{base}/devices/front_door/locked")).send().await.unwrap().json().await.unwrap();
    assert_eq!(v["value"], true);

    let resp = c.put(format!("{base}/devices/kitchen_light/brightness")).json(&json!({"value": 55})).send().await.unwrap();
    assert_eq!(resp.status(), 200);
    let resp = c.put(format!("{base}/devices/kitchen_light/brightness")).json(&json!({"value": 101})).send().await.unwrap();
    assert_eq!(resp.status(), 422);
    let resp = c.put(format!("{base}/devices/kitchen_light/power")).json(&json!({"value": "dim"})).send().await.unwrap();
    assert_eq!(resp.status(), 422);
    assert_eq!(c.get(format!("{base}/devices/garage_light/power")).send().await.unwrap().status(), 404);
    assert_eq!(c.get(format!("{base}/devices/kitchen_light/colour")).send().await.unwrap().status(), 404);

    let resp = c
        .post(format!("{base}/stimuli"))
        .json(&json!({"at": 30, "kind": "fire_sensor", "device": "hallway_motion"}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
    let clock: Value = c.get(format!("{base}/clock")).send().await.unwrap().json().await.unwrap();
    assert_eq!(clock["tick"], 30);
    let resp = c
        .post(format!("{base}/stimuli"))
        .json(&json!({"at": 31, "kind": "invoke_function", "payload": ""}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 400);

    let state: Value = c.get(format!("{base}/state")).send().await.unwrap().json().await.unwrap();
    let log = state["event_log"].as_array().unwrap();
    assert_eq!(log.len(), 2);
    assert_eq!(log[0]["new"], 55);
    assert_eq!(log[1]["device"], "hallway_motion");

    let resp = c.post(format!("{base}/reset")).json(&faasforge::sim::DeviceState::default_home()).send().await.unwrap();
    assert_eq!(resp.status(), 204);
    let state: Value = c.get(format!("{base}/state")).send().await.unwrap().json().await.unwrap();
    assert_eq!(state["event_log"].as_array().unwrap().len(), 0);
    assert_eq!(state["clock"], 0);
}

struct Rig {
    sim: Arc<HomeSimulator>,
    _home: SimServer,
    gateway: GatewayServer,
    platform: Platform,
}

impl Rig {
    async fn new() -> Self {
        let platform = Platform::new(PlatformConfig { install_dependencies: false, ..Default::default() }).unwrap();
        let sim = Arc::new(HomeSimulator::default());
        let home = SimServer::start(sim.clone(), ephemeral()).await.unwrap();
        let gateway = GatewayServer::start(platform.clone(), ephemeral()).await.unwrap();
        Self { sim, _home: home, gateway, platform }
    }

    async fn deploy(&self, name: &str, runtime: &str, code: &str) -> String {
        let tag = if runtime == "python3" { "python" } else { "javascript" };
        let provider = Arc::new(MockProvider::constant(fence(code, tag)));
        let mut options = BridgeOptions::default();
        options.package.home_api_url = self._home.base_url();
        let bridge = Bridge::new(provider, LlmConfig::default(), self.platform.clone(), options);
        let desc = UserDescription::new("test function", runtime).with_task_id(name);
        let built = bridge.build_and_deploy(&desc).await.unwrap_or_else(|e| panic!("{:?}", e.failure));
        self.gateway.function_url(built.record.name())
    }
}

const MOTION_CASE: &str = r#"{
  "name": "motion at night",
  "scenario": {"stimuli": [
    {"at": 1300, "kind": "fire_sensor", "device": "hallway_motion"},
    {"at": 1301, "kind": "invoke_function", "payload": "{\"level\": 25}"}
  ]},
  "assertions": [
    {"type": "attribute_equals", "device": "hallway_light", "attribute": "power", "value": "on"},
    {"type": "attribute_equals", "device": "hallway_light", "attribute": "brightness", "value": 25},
    {"type": "event_order", "first": {"device": "hallway_motion", "attribute": "motion", "value": true},
                            "then": {"device": "hallway_light", "attribute": "power", "value": "on"}},
    {"type": "event_occurred", "device": "hallway_light", "attribute": "brightness"},
    {"type": "no_change", "device": "front_door"}
  ]
}"#;

const PY_MOTION: &str = r#"import json
import home


def fn(input):
    data = json.loads(input)
    if home.get("hallway_motion", "motion") and home.now() >= 1200:
        home.set("hallway_light", "power", "on")
        home.set("hallway_light", "brightness", data["level"])
    try:
        home.set("kitchen_light", "brightness", 500)
    except home.HomeError:
        pass
    return json.dumps(home.state("hallway_light"))
"#;

const JS_MOTION: &str = r#"const home = require('./home');

async function fn(input) {
  const data = JSON.parse(input);
  if ((await home.get('hallway_motion', 'motion')) && (await home.now()) >= 1200) {
    await home.set('hallway_light', 'power', 'on');
    await home.set('hallway_light', 'brightness', data.level);
  }
  try {
    await home.set('kitchen_light', 'brightness', 500);
  } catch (e) {
    if (!(e instanceof home.HomeError)) throw e;
  }
  return JSON.stringify(await home.state('hallway_light'));
}

module.exports = { fn };
"#;

#[tokio::test]
async fn guest_clients_drive_the_simulator() {
    let rig = Rig::new().await;
    let case: SemanticTestCase = serde_json::from_str(MOTION_CASE).unwrap();
    for (name, runtime, code) in [("py-motion", "python3", PY_MOTION), ("js-motion", "nodejs", JS_MOTION)] {
        let url = rig.deploy(name, runtime, code).await;
        let report = run_test(&rig.sim, &case, &url, &client()).await.unwrap();
        assert!(report.pass, "{runtime}: {:?}", report.failed_assertions);
        assert_eq!(report.final_state.clock, 1301);
        // The out-of-range write was rejected and left no event.
        assert!(!report.final_state.event_log.iter().any(|e| e.device == "kitchen_light"));
    }
    rig.platform.shutdown().await;
}

#[tokio::test]
async fn failing_assertions_and_run_errors() {
    let rig = Rig::new().await;
    let case: SemanticTestCase = serde_json::from_str(MOTION_CASE).unwrap();

    let lazy = rig.deploy("lazy", "python3", "import home\n\n\ndef fn(input):\n    home.set(\"front_door\", \"locked\", False)\n    return \"ok\"\n").await;
    let report = run_test(&rig.sim, &case, &lazy, &client()).await.unwrap();
    assert!(!report.pass);
    assert_eq!(report.failed_assertions.len(), 5, "{:?}", report.failed_assertions);
    assert!(report.failed_assertions.iter().any(|f| f.contains("front_door.locked changed")));

    let broken = rig.deploy("broken", "python3", "import home\n\n\ndef fn(input):\n    return {}[\"missing\"]\n").await;
    let err = run_test(&rig.sim, &case, &broken, &client()).await.unwrap_err();
    let RunError::GuestError { status, detail } = err else { panic!("{err:?}") };
    assert_eq!(status, 500);
    assert!(detail.contains("KeyError"), "{detail}");

    let missing = rig.gateway.function_url("never-deployed");
    assert!(matches!(run_test(&rig.sim, &case, &missing, &client()).await, Err(RunError::FunctionUnreachable(_))));
    assert!(matches!(run_test(&rig.sim, &case, "http://127.0.0.1:9/fn/x", &client()).await, Err(RunError::FunctionUnreachable(_))));
    rig.platform.shutdown().await;
}

#[tokio::test]
async fn scenario_initial_state_and_bad_stimulus() {
    let sim = HomeSimulator::default();
    let mut initial = faasforge::sim::DeviceState::default_home();
    initial.set("speaker", "volume", 90i64.into()).unwrap();
    initial.event_log.clear();
    let case = SemanticTestCase {
        name: "preset".into(),
        scenario: serde_json::from_value(json!({
            "initial_state": initial,
            "stimuli": [{"at": 2, "kind": "set_attribute", "device": "speaker", "attribute": "volume", "value": 10}]
        }))
        .unwrap(),
        assertions: serde_json::from_value(json!([
            {"type": "event_occurred", "device": "speaker", "attribute": "volume", "value": 10},
            {"type": "no_change", "device": "speaker"}
        ]))
        .unwrap(),
    };
    let report = run_test(&sim, &case, "http://127.0.0.1:9/unused", &client()).await.unwrap();
    assert_eq!(report.failed_assertions, vec!["speaker.volume changed from 90 to 10".to_string()]);

    let bad: SemanticTestCase = serde_json::from_value(json!({
        "scenario": {"stimuli": [{"at": 0, "kind": "set_attribute", "device": "speaker", "attribute": "volume", "value": 300}]},
        "assertions": [{"type": "no_change", "device": "speaker"}]
    }))
    .unwrap();
    assert!(matches!(run_test(&sim, &bad, "http://127.0.0.1:9/unused", &client()).await, Err(RunError::Scenario(_))));
}
