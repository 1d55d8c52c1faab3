use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    Light,
    Thermostat,
    Blinds,
    Lock,
    MotionSensor,
    Speaker,
}

/// A single attribute value. Integers and floats are kept apart so that
/// state files round-trip without `50` turning into `50.0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl Scalar {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Int(i) => Some(*i as f64),
            Scalar::Float(f) => Some(*f),
            _ => None,
        }
    }

    /// Value equality that treats `21` and `21.0` as the same number.
    pub fn same_value(&self, other: &Scalar) -> bool {
        match (self.as_f64(), other.as_f64()) {
            (Some(a), Some(b)) => (a - b).abs() < 1e-9,
            _ => self == other,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Bool(b) => write!(f, "{b}"),
            Scalar::Int(i) => write!(f, "{i}"),
            Scalar::Float(x) => write!(f, "{x}"),
            Scalar::Text(s) => write!(f, "{s:?}"),
        }
    }
}

impl From<bool> for Scalar {
    fn from(v: bool) -> Self {
        Scalar::Bool(v)
    }
}

impl From<i64> for Scalar {
    fn from(v: i64) -> Self {
        Scalar::Int(v)
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Float(v)
    }
}

impl From<&str> for Scalar {
    fn from(v: &str) -> Self {
        Scalar::Text(v.to_string())
    }
}

/// Domain of one attribute.
#[derive(Debug, Clone, Copy)]
pub enum AttrDomain {
    Bool,
    Integer { min: i64, max: i64 },
    Number { min: f64, max: f64 },
    Choice(&'static [&'static str]),
    Text,
}

impl AttrDomain {
    pub fn check(&self, value: &Scalar) -> Result<Scalar, String> {
        match (self, value) {
            (AttrDomain::Bool, Scalar::Bool(_)) => Ok(value.clone()),
            (AttrDomain::Integer { min, max }, v) => {
                let x = v.as_f64().ok_or_else(|| format!("expected an integer, got {v}"))?;
                if x.fract() != 0.0 {
                    return Err(format!("expected an integer, got {v}"));
                }
                let i = x as i64;
                if i < *min || i > *max {
                    return Err(format!("{i} outside [{min}, {max}]"));
                }
                Ok(Scalar::Int(i))
            }
            (AttrDomain::Number { min, max }, v) => {
                let x = v.as_f64().ok_or_else(|| format!("expected a number, got {v}"))?;
                if !(x >= *min && x <= *max) {
                    return Err(format!("{x} outside [{min}, {max}]"));
                }
                Ok(v.clone())
            }
            (AttrDomain::Choice(options), Scalar::Text(s)) => {
                if options.contains(&s.as_str()) {
                    Ok(value.clone())
                } else {
                    Err(format!("{s:?} is not one of {options:?}"))
                }
            }
            (AttrDomain::Text, Scalar::Text(_)) => Ok(value.clone()),
            (domain, v) => Err(format!("{v} does not fit {domain:?}")),
        }
    }
}

const ON_OFF: &[&str] = &["on", "off"];
const MODES: &[&str] = &["off", "heat", "cool", "auto"];

impl DeviceKind {
    pub fn attributes(self) -> &'static [(&'static str, AttrDomain)] {
        match self {
            DeviceKind::Light => &[
                ("power", AttrDomain::Choice(ON_OFF)),
                ("brightness", AttrDomain::Integer { min: 0, max: 100 }),
            ],
            DeviceKind::Thermostat => &[
                ("mode", AttrDomain::Choice(MODES)),
                ("target_temp", AttrDomain::Number { min: 5.0, max: 35.0 }),
                ("current_temp", AttrDomain::Number { min: -30.0, max: 50.0 }),
            ],
            DeviceKind::Blinds => &[("position", AttrDomain::Integer { min: 0, max: 100 })],
            DeviceKind::Lock => &[("locked", AttrDomain::Bool)],
            DeviceKind::MotionSensor => &[("motion", AttrDomain::Bool)],
            DeviceKind::Speaker => &[
                ("power", AttrDomain::Choice(ON_OFF)),
                ("volume", AttrDomain::Integer { min: 0, max: 100 }),
                ("playing", AttrDomain::Text),
            ],
        }
    }

    pub fn domain(self, attribute: &str) -> Option<AttrDomain> {
        self.attributes().iter().find(|(name, _)| *name == attribute).map(|(_, d)| *d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub kind: DeviceKind,
    pub attributes: BTreeMap<String, Scalar>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Virtual clock tick at which the mutation happened.
    pub tick: u64,
    pub device: String,
    pub attribute: String,
    pub old: Scalar,
    pub new: Scalar,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DeviceState {
    pub devices: BTreeMap<String, Device>,
    #[serde(default)]
    pub event_log: Vec<Event>,
    #[serde(default)]
    pub clock: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("unknown device {0:?}")]
    UnknownDevice(String),
    #[error("device {device:?} has no attribute {attribute:?}")]
    UnknownAttribute { device: String, attribute: String },
    #[error("{device}.{attribute}: {detail}")]
    OutOfRange { device: String, attribute: String, detail: String },
    #[error("invalid initial state: {0}")]
    InvalidState(String),
}

impl DeviceState {
    /// Default house: one light per room, a thermostat, two blinds, the
    /// front door lock, a hallway motion sensor and a speaker.
    pub fn default_home() -> Self {
        serde_json::from_str(include_str!("../../assets/home/default_state.json"))
            .expect("shipped default state parses")
    }

    /// Checks every attribute against its kind's domain.
    pub fn validate(&self) -> Result<(), SimError> {
        for (id, device) in &self.devices {
            for (attr, value) in &device.attributes {
                let domain = device
                    .kind
                    .domain(attr)
                    .ok_or_else(|| SimError::InvalidState(format!("{id} has unknown attribute {attr}")))?;
                domain.check(value).map_err(|d| SimError::InvalidState(format!("{id}.{attr}: {d}")))?;
            }
        }
        Ok(())
    }

    pub fn get(&self, device: &str, attribute: &str) -> Result<&Scalar, SimError> {
        let d = self.devices.get(device).ok_or_else(|| SimError::UnknownDevice(device.into()))?;
        d.attributes
            .get(attribute)
            .ok_or_else(|| SimError::UnknownAttribute { device: device.into(), attribute: attribute.into() })
    }

    /// Writes one attribute and appends exactly one event. The state is left
    /// untouched on error.
    pub fn set(&mut self, device: &str, attribute: &str, value: Scalar) -> Result<&Device, SimError> {
        let d = self.devices.get_mut(device).ok_or_else(|| SimError::UnknownDevice(device.into()))?;
        let domain = d
            .kind
            .domain(attribute)
            .ok_or_else(|| SimError::UnknownAttribute { device: device.into(), attribute: attribute.into() })?;
        let value = domain.check(&value).map_err(|detail| SimError::OutOfRange {
            device: device.into(),
            attribute: attribute.into(),
            detail,
        })?;
        let old = d.attributes.insert(attribute.to_string(), value.clone()).unwrap_or(Scalar::Text(String::new()));
        self.event_log.push(Event {
            tick: self.clock,
            device: device.into(),
            attribute: attribute.into(),
            old,
            new: value,
        });
        Ok(&self.devices[device])
    }
}
