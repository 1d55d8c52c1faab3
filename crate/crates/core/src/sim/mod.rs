//! Smart-home simulator. Its observable state is the oracle for functional
//! tests of generated functions.
//!
//! Device API (JSON):
//!
//! | method | path                        | body                |
//! |--------|-----------------------------|---------------------|
//! | GET    | `/devices`                  |                     |
//! | GET    | `/devices/{id}`             |                     |
//! | GET    | `/devices/{id}/{attribute}` |                     |
//! | PUT    | `/devices/{id}/{attribute}` | `{"value": ...}`    |
//! | GET    | `/state`                    |                     |
//! | POST   | `/reset`                    | a `DeviceState`     |
//! | POST   | `/stimuli`                  | a `Stimulus`        |
//! | GET    | `/clock`                    |                     |

mod scenario;
mod state;

use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::server::BackgroundServer;

pub use scenario::{
    run_test, test_client, Assertion, EventMatch, RunError, ScenarioScript, SemanticTestCase, Stimulus,
    StimulusAction, TestReport, GATEWAY_ERROR_HEADER,
};
pub use state::{AttrDomain, Device, DeviceKind, DeviceState, Event, Scalar, SimError};

/// Thread-safe simulator. Writes serialize on one lock; reads run concurrently.
#[derive(Debug)]
pub struct HomeSimulator {
    state: RwLock<DeviceState>,
}

impl Default for HomeSimulator {
    fn default() -> Self {
        Self::new(DeviceState::default_home()).expect("default home is valid")
    }
}

impl HomeSimulator {
    pub fn new(initial: DeviceState) -> Result<Self, SimError> {
        initial.validate()?;
        Ok(Self { state: RwLock::new(initial) })
    }

    /// Replaces the whole world, including the event log and clock.
    pub fn reset(&self, initial: DeviceState) -> Result<(), SimError> {
        initial.validate()?;
        *self.state.write().unwrap() = initial;
        Ok(())
    }

    pub fn get_state(&self) -> DeviceState {
        self.state.read().unwrap().clone()
    }

    pub fn get(&self, device: &str, attribute: &str) -> Result<Scalar, SimError> {
        self.state.read().unwrap().get(device, attribute).cloned()
    }

    pub fn set(&self, device: &str, attribute: &str, value: Scalar) -> Result<Device, SimError> {
        self.state.write().unwrap().set(device, attribute, value).cloned()
    }

    /// Applies a stimulus atomically. `invoke_function` only advances the
    /// clock here; calling the function is the test runner's job.
    pub fn apply(&self, stimulus: &Stimulus) -> Result<DeviceState, SimError> {
        let mut state = self.state.write().unwrap();
        let mut next = state.clone();
        next.clock = next.clock.max(stimulus.at);
        match &stimulus.action {
            StimulusAction::SetAttribute { device, attribute, value } => {
                next.set(device, attribute, value.clone())?;
            }
            StimulusAction::FireSensor { device } => {
                next.set(device, "motion", Scalar::Bool(true))?;
            }
            StimulusAction::InvokeFunction { .. } | StimulusAction::AdvanceClock => {}
        }
        *state = next;
        Ok(state.clone())
    }

    pub fn clock(&self) -> u64 {
        self.state.read().unwrap().clock
    }
}

struct ApiError(StatusCode, &'static str, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1, "detail": self.2 }))).into_response()
    }
}

impl From<SimError> for ApiError {
    fn from(e: SimError) -> Self {
        let (status, kind) = match &e {
            SimError::UnknownDevice(_) => (StatusCode::NOT_FOUND, "unknown_device"),
            SimError::UnknownAttribute { .. } => (StatusCode::NOT_FOUND, "unknown_attribute"),
            SimError::OutOfRange { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "out_of_range"),
            SimError::InvalidState(_) => (StatusCode::BAD_REQUEST, "invalid_state"),
        };
        ApiError(status, kind, e.to_string())
    }
}

#[derive(Deserialize)]
struct ValueBody {
    value: Scalar,
}

type Sim = Arc<HomeSimulator>;

/// Router for the device API.
pub fn router(sim: Sim) -> Router {
    Router::new()
        .route("/devices", get(|State(s): State<Sim>| async move { Json(s.get_state().devices) }))
        .route(
            "/devices/{id}",
            get(|State(s): State<Sim>, Path(id): Path<String>| async move {
                s.get_state()
                    .devices
                    .get(&id)
                    .cloned()
                    .map(Json)
                    .ok_or_else(|| ApiError::from(SimError::UnknownDevice(id)))
            }),
        )
        .route(
            "/devices/{id}/{attribute}",
            get(|State(s): State<Sim>, Path((id, attr)): Path<(String, String)>| async move {
                Ok::<_, ApiError>(Json(json!({ "value": s.get(&id, &attr)? })))
            })
            .put(
                |State(s): State<Sim>, Path((id, attr)): Path<(String, String)>, Json(body): Json<ValueBody>| async move {
                    Ok::<_, ApiError>(Json(s.set(&id, &attr, body.value)?))
                },
            ),
        )
        .route("/state", get(|State(s): State<Sim>| async move { Json(s.get_state()) }))
        .route(
            "/reset",
            post(|State(s): State<Sim>, Json(body): Json<DeviceState>| async move {
                s.reset(body)?;
                Ok::<_, ApiError>(StatusCode::NO_CONTENT)
            }),
        )
        .route(
            "/stimuli",
            post(|State(s): State<Sim>, Json(body): Json<Stimulus>| async move {
                if matches!(body.action, StimulusAction::InvokeFunction { .. }) {
                    return Err(ApiError(
                        StatusCode::BAD_REQUEST,
                        "unsupported",
                        "invoke_function stimuli are driven by the test runner".into(),
                    ));
                }
                Ok(Json(s.apply(&body)?))
            }),
        )
        .route("/clock", get(|State(s): State<Sim>| async move { Json(json!({ "tick": s.clock() })) }))
        .with_state(sim)
}

/// A device API server bound to a local port, shut down on drop.
pub struct SimServer {
    pub sim: Sim,
    server: BackgroundServer,
}

impl SimServer {
    pub async fn start(sim: Sim, addr: SocketAddr) -> std::io::Result<Self> {
        let server = BackgroundServer::start(router(sim.clone()), addr).await?;
        Ok(Self { sim, server })
    }

    pub fn addr(&self) -> SocketAddr {
        self.server.addr()
    }

    pub fn base_url(&self) -> String {
        self.server.base_url()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_erases_prior_state() {
        let sim = HomeSimulator::default();
        sim.set("kitchen_light", "power", "on".into()).unwrap();
        sim.apply(&Stimulus { at: 7, action: StimulusAction::AdvanceClock }).unwrap();
        let initial = DeviceState::default_home();
        sim.reset(initial.clone()).unwrap();
        assert_eq!(sim.get_state(), initial);
    }

    #[test]
    fn failed_stimulus_is_atomic() {
        let sim = HomeSimulator::default();
        let before = sim.get_state();
        let bad = Stimulus {
            at: 9,
            action: StimulusAction::SetAttribute {
                device: "speaker".into(),
                attribute: "volume".into(),
                value: Scalar::Int(400),
            },
        };
        assert!(sim.apply(&bad).is_err());
        assert_eq!(sim.get_state(), before);
    }

    #[test]
    fn fire_sensor_sets_motion_with_clock() {
        let sim = HomeSimulator::default();
        let s = sim.apply(&Stimulus { at: 4, action: StimulusAction::FireSensor { device: "hallway_motion".into() } }).unwrap();
        assert_eq!(s.clock, 4);
        assert_eq!(s.event_log.len(), 1);
        assert_eq!(s.event_log[0].tick, 4);
        assert_eq!(s.devices["hallway_motion"].attributes["motion"], Scalar::Bool(true));
    }
}
