//! Discrete-event simulation of a single CAN bus with periodic ECU traffic
//! and scripted impersonation or added-device attacks.

mod config;
mod engine;
mod timeline;

pub use config::{
    AttackConfig, AttackKind, EcuConfig, FrameSchedule, NetworkConfig, NetworkSection,
    PowerSection, REFERENCE_CONFIG,
};
pub use engine::{build_network, inject, DroppedEmission, EcuNode, SimOutput, SimSummary, Simulation};
pub use timeline::{read_timeline, spans_by_ecu, write_timeline, ActivityTimeline, TimelineRecord, TxInterval};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("ownership conflict: id {id:#05x} claimed by {first} and {second}")]
    OwnershipConflict {
        id: u16,
        first: String,
        second: String,
    },
    #[error("empty network")]
    EmptyNetwork,
    #[error("unknown victim id {0:#05x}")]
    UnknownVictimId(u16),
    #[error("invalid attack: {0}")]
    InvalidAttack(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Can(#[from] crate::can::CanError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
