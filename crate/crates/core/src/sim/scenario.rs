use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::state::{DeviceState, Event, Scalar, SimError};
use super::HomeSimulator;

/// One scripted step. `at` is a virtual clock tick; the simulator clock moves
/// forward to it before the step is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    pub at: u64,
    #[serde(flatten)]
    pub action: StimulusAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StimulusAction {
    /// POST `payload` to the function under test.
    InvokeFunction {
        #[serde(default)]
        payload: String,
    },
    SetAttribute { device: String, attribute: String, value: Scalar },
    /// Sets a motion sensor's `motion` attribute to true.
    FireSensor { device: String },
    /// Only moves the virtual clock; models "after N minutes" style timers.
    AdvanceClock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    #[serde(default = "DeviceState::default_home")]
    pub initial_state: DeviceState,
    pub stimuli: Vec<Stimulus>,
}

impl ScenarioScript {
    pub fn validate(&self) -> Result<(), String> {
        if self.stimuli.windows(2).any(|w| w[0].at > w[1].at) {
            return Err("stimuli are not sorted by time".into());
        }
        self.initial_state.validate().map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMatch {
    pub device: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Scalar>,
}

impl EventMatch {
    fn matches(&self, e: &Event) -> bool {
        e.device == self.device
            && self.attribute.as_ref().is_none_or(|a| *a == e.attribute)
            && self.value.as_ref().is_none_or(|v| v.same_value(&e.new))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Assertion {
    AttributeEquals { device: String, attribute: String, value: Scalar },
    EventOccurred {
        device: String,
        attribute: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<Scalar>,
    },
    /// The first event matching `first` precedes the first matching `then`.
    EventOrder { first: EventMatch, then: EventMatch },
    /// Every attribute of `device` still equals its initial value.
    NoChange { device: String },
}

impl Assertion {
    /// Evaluates the assertion; `Err` carries a human-readable reason.
    pub fn check(&self, initial: &DeviceState, end: &DeviceState) -> Result<(), String> {
        match self {
            Assertion::AttributeEquals { device, attribute, value } => {
                let actual = end.get(device, attribute).map_err(|e| e.to_string())?;
                if actual.same_value(value) {
                    Ok(())
                } else {
                    Err(format!("{device}.{attribute} is {actual}, expected {value}"))
                }
            }
            Assertion::EventOccurred { device, attribute, value } => {
                let m = EventMatch { device: device.clone(), attribute: Some(attribute.clone()), value: value.clone() };
                if end.event_log.iter().any(|e| m.matches(e)) {
                    Ok(())
                } else {
                    Err(format!("no event {device}.{attribute}{}", value.as_ref().map(|v| format!(" -> {v}")).unwrap_or_default()))
                }
            }
            Assertion::EventOrder { first, then } => {
                let a = end.event_log.iter().position(|e| first.matches(e));
                let b = end.event_log.iter().position(|e| then.matches(e));
                match (a, b) {
                    (Some(a), Some(b)) if a < b => Ok(()),
                    (Some(_), Some(_)) => Err(format!("{} happened before {}", then.device, first.device)),
                    (None, _) => Err(format!("no event for {}", first.device)),
                    (_, None) => Err(format!("no event for {}", then.device)),
                }
            }
            Assertion::NoChange { device } => {
                let before = initial.devices.get(device).ok_or_else(|| format!("unknown device {device:?}"))?;
                let after = end.devices.get(device).ok_or_else(|| format!("unknown device {device:?}"))?;
                for (attr, v) in &before.attributes {
                    match after.attributes.get(attr) {
                        Some(now) if now.same_value(v) => {}
                        Some(now) => return Err(format!("{device}.{attr} changed from {v} to {now}")),
                        None => return Err(format!("{device}.{attr} disappeared")),
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticTestCase {
    #[serde(default)]
    pub name: String,
    pub scenario: ScenarioScript,
    pub assertions: Vec<Assertion>,
}

impl SemanticTestCase {
    pub fn validate(&self) -> Result<(), String> {
        if self.assertions.is_empty() {
            return Err("test case has no assertions".into());
        }
        self.scenario.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub pass: bool,
    pub failed_assertions: Vec<String>,
    pub final_state: DeviceState,
}

/// Why a test case could not be evaluated. Any of these means the function
/// did not run cleanly, which is a syntactic failure upstream.
#[derive(Debug, Clone, thiserror::Error)]
pub enum RunError {
    #[error("function unreachable: {0}")]
    FunctionUnreachable(String),
    #[error("guest error (HTTP {status}): {detail}")]
    GuestError { status: u16, detail: String },
    #[error("invocation timed out: {0}")]
    Timeout(String),
    #[error("scenario error: {0}")]
    Scenario(#[from] SimError),
}

/// Runs one semantic test case against a deployed function.
///
/// Resets the simulator to the case's initial state, applies the stimuli in
/// order (POSTing `invoke_function` payloads to `endpoint`), then evaluates
/// every assertion on the final state.
pub async fn run_test(
    sim: &HomeSimulator,
    case: &SemanticTestCase,
    endpoint: &str,
    client: &reqwest::Client,
) -> Result<TestReport, RunError> {
    sim.reset(case.scenario.initial_state.clone())?;
    for stimulus in &case.scenario.stimuli {
        sim.apply(stimulus)?;
        if let StimulusAction::InvokeFunction { payload } = &stimulus.action {
            invoke_endpoint(client, endpoint, payload).await?;
        }
    }
    let end = sim.get_state();
    let failed_assertions: Vec<String> = case
        .assertions
        .iter()
        .filter_map(|a| a.check(&case.scenario.initial_state, &end).err())
        .collect();
    Ok(TestReport { pass: failed_assertions.is_empty(), failed_assertions, final_state: end })
}

/// Header the platform gateway sets on error responses it generates itself.
pub const GATEWAY_ERROR_HEADER: &str = "x-forge-error";

async fn invoke_endpoint(client: &reqwest::Client, endpoint: &str, payload: &str) -> Result<String, RunError> {
    let resp = client
        .post(endpoint)
        .header("content-type", "text/plain; charset=utf-8")
        .body(payload.to_string())
        .send()
        .await
        .map_err(|e| {
            if e.is_timeout() {
                RunError::Timeout(e.to_string())
            } else {
                RunError::FunctionUnreachable(e.to_string())
            }
        })?;
    let status = resp.status();
    let tag = resp
        .headers()
        .get(GATEWAY_ERROR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let body = resp.text().await.unwrap_or_default();
    if status.is_success() {
        return Ok(body);
    }
    Err(match tag.as_deref() {
        Some("timeout") => RunError::Timeout(body),
        Some("not-found") => RunError::FunctionUnreachable(body),
        _ if status.as_u16() == 404 => RunError::FunctionUnreachable(body),
        _ => RunError::GuestError { status: status.as_u16(), detail: body },
    })
}

/// Default HTTP client for semantic test runs.
pub fn test_client(timeout: Duration) -> reqwest::Client {
    reqwest::Client::builder().timeout(timeout).no_proxy().build().expect("reqwest client")
}
