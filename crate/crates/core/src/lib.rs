//! Sender authentication for CAN from per-ECU power traces, and black-box
//! explanations of the authentication model's verdicts.
//!
//! The pipeline runs bottom-up through the modules:
//!
//! * [`can`]: bit-exact CAN 2.0A frames, CRC-15, stuffing, arbitration.
//! * [`sim`]: discrete-event bus simulation with impersonation and
//!   added-device attacks.
//! * [`power`]: synthetic power traces whose statistics differ between
//!   transmitting and idle states.
//! * [`auth`]: window features, per-ECU transmit classifiers, per-frame
//!   verdicts and metrics.
//! * [`explain`]: mask optimization, windowed sub-sample saliency and
//!   contrastive maps over any [`explain::BlackBoxScorer`].
//! * [`reconstruct`]: principal-subspace latent model and class-preserving
//!   regeneration of salient regions.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auth;
pub mod can;
pub mod explain;
pub mod power;
pub mod reconstruct;
pub mod sim;
pub mod stats;

/// Crate version, recorded in run reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
