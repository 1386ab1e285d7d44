use serde::{Deserialize, Serialize};

use super::SimError;
use crate::power::PowerParams;

/// Five ECUs, eight periodic frames, roughly 9% bus load at 500 kbit/s.
pub const REFERENCE_CONFIG: &str = include_str!("../../../../configs/reference.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub network: NetworkSection,
    #[serde(default)]
    pub power: PowerSection,
    #[serde(default)]
    pub ecu: Vec<EcuConfig>,
    #[serde(default)]
    pub attack: Vec<AttackConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default = "default_bitrate")]
    pub bitrate_bps: f64,
    /// Uniform release jitter as a fraction of each period.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            bitrate_bps: default_bitrate(),
            jitter: default_jitter(),
        }
    }
}

fn default_bitrate() -> f64 {
    500_000.0
}

fn default_jitter() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    #[serde(default = "default_sample_rate")]
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub defaults: PowerParams,
}

impl Default for PowerSection {
    fn default() -> Self {
        Self {
            sample_rate_hz: default_sample_rate(),
            defaults: PowerParams::default(),
        }
    }
}

fn default_sample_rate() -> f64 {
    1_000_000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EcuConfig {
    pub name: String,
    #[serde(default)]
    pub frames: Vec<FrameSchedule>,
    /// Overrides `[power.defaults]` for this ECU.
    #[serde(default)]
    pub power: Option<PowerParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSchedule {
    pub id: u16,
    pub dlc: u8,
    pub period_s: f64,
    #[serde(default)]
    pub phase_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// A compromised network member sends frames with another ECU's id.
    Impersonation,
    /// A node outside the configured network sends frames with a member's id.
    AddedDevice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub attacker: String,
    pub victim_id: u16,
    pub start_s: f64,
    pub rate_hz: f64,
    #[serde(default)]
    pub stop_s: Option<f64>,
}

impl NetworkConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        Ok(toml::from_str(text)?)
    }

    pub fn reference() -> Self {
        Self::from_toml(REFERENCE_CONFIG).expect("reference config parses")
    }

    /// Power parameters for `ecu`, falling back to the section defaults.
    /// Added devices have no configured probe and also get the defaults.
    pub fn power_params(&self, ecu: &str) -> PowerParams {
        self.ecu
            .iter()
            .find(|e| e.name == ecu)
            .and_then(|e| e.power.clone())
            .unwrap_or_else(|| self.power.defaults.clone())
    }

    /// The frame-id ownership map, id -> ECU name.
    pub fn ownership(&self) -> std::collections::BTreeMap<u16, String> {
        self.ecu
            .iter()
            .flat_map(|e| e.frames.iter().map(move |f| (f.id, e.name.clone())))
            .collect()
    }
}
