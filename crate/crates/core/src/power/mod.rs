//! Synthetic per-ECU power traces. Driving a dominant bit costs more than
//! releasing the bus for a recessive one, interval edges add a decaying
//! transient, and the rest is baseline, drift and white noise.

mod io;
mod labels;

pub use io::{read_labels, read_trace, write_labels, write_trace, LabelRecord};
pub use labels::{label_windows, Label, LabeledWindow};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::sim::{NetworkConfig, SimOutput, TxInterval};

/// Transients older than this many time constants are treated as decayed
/// (e^-40 is below f64 resolution relative to the baseline).
const TRANSIENT_CUTOFF_TAUS: f64 = 40.0;

#[derive(Debug, Error)]
pub enum PowerError {
    #[error("timeline overflow: interval ends at {end} s past duration {duration} s")]
    TimelineOverflow { end: f64, duration: f64 },
    #[error("window too large: {window} samples for a {len}-sample trace")]
    WindowTooLarge { window: usize, len: usize },
    #[error("invalid power parameters: {0}")]
    InvalidParams(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("trace file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerParams {
    pub baseline_mw: f64,
    pub dominant_extra_mw: f64,
    pub recessive_extra_mw: f64,
    pub transient_amp_mw: f64,
    pub transient_tau_s: f64,
    pub noise_sigma_mw: f64,
    pub drift_mw_per_s: f64,
}

impl Default for PowerParams {
    fn default() -> Self {
        Self {
            baseline_mw: 500.0,
            dominant_extra_mw: 40.0,
            recessive_extra_mw: 6.0,
            transient_amp_mw: 12.0,
            transient_tau_s: 4e-6,
            noise_sigma_mw: 4.0,
            drift_mw_per_s: 0.02,
        }
    }
}

impl PowerParams {
    pub fn validate(&self) -> Result<(), PowerError> {
        let all = [
            self.baseline_mw,
            self.dominant_extra_mw,
            self.recessive_extra_mw,
            self.transient_amp_mw,
            self.transient_tau_s,
            self.noise_sigma_mw,
            self.drift_mw_per_s,
        ];
        let bad = |m: &str| Err(PowerError::InvalidParams(m.into()));
        if all.iter().any(|v| !v.is_finite()) {
            return bad("all parameters must be finite");
        }
        if self.baseline_mw <= 0.0 {
            return bad("baseline_mw must be positive");
        }
        if self.noise_sigma_mw < 0.0 {
            return bad("noise_sigma_mw must be non-negative");
        }
        if !(self.dominant_extra_mw > self.recessive_extra_mw && self.recessive_extra_mw >= 0.0) {
            return bad("need dominant_extra_mw > recessive_extra_mw >= 0");
        }
        if self.transient_tau_s <= 0.0 && self.transient_amp_mw != 0.0 {
            return bad("transient_tau_s must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace {
    pub ecu: String,
    pub sample_rate_hz: f64,
    pub t0: f64,
    pub samples: Vec<f64>,
}

impl PowerTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_of(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.sample_rate_hz
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Index of the first sample at or after `t`.
    pub fn index_at(&self, t: f64) -> usize {
        ((t - self.t0) * self.sample_rate_hz - 1e-9).ceil().max(0.0) as usize
    }
}

/// Number of samples covering `duration` at `rate`: ceil(duration * rate).
pub fn sample_count(duration: f64, rate: f64) -> usize {
    // Guard against 60.0 * 1e5 landing a hair above an integer.
    (duration * rate - 1e-9).ceil().max(0.0) as usize
}

/// Evaluates the power model at every sample instant `i / sample_rate_hz`.
///
/// Deterministic given `seed`; noise draws are skipped entirely when
/// `noise_sigma_mw` is zero.
pub fn synthesize(
    ecu: &str,
    params: &PowerParams,
    timeline: &[TxInterval],
    duration: f64,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<PowerTrace, PowerError> {
    params.validate()?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(PowerError::InvalidArgument(format!("duration {duration}")));
    }
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(PowerError::InvalidArgument(format!(
            "sample rate {sample_rate_hz}"
        )));
    }
    if let Some(last) = timeline.iter().map(|i| i.t_end).reduce(f64::max) {
        if last > duration + 1e-12 {
            return Err(PowerError::TimelineOverflow {
                end: last,
                duration,
            });
        }
    }
    let n = sample_count(duration, sample_rate_hz);
    let cutoff = TRANSIENT_CUTOFF_TAUS * params.transient_tau_s;
    let noise = (params.noise_sigma_mw > 0.0)
        .then(|| Normal::new(0.0, params.noise_sigma_mw).expect("validated sigma"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut samples = Vec::with_capacity(n);
    // First interval whose influence (bits or trailing transient) can still
    // reach the current sample.
    let mut lo = 0;
    for i in 0..n {
        let t = i as f64 / sample_rate_hz;
        let mut p = params.baseline_mw + params.drift_mw_per_s * t;
        while lo < timeline.len() && timeline[lo].t_end + cutoff < t {
            lo += 1;
        }
        for iv in &timeline[lo..] {
            if iv.t_start > t {
                break;
            }
            if t < iv.t_end {
                p += bit_power(params, iv, t);
            }
            if params.transient_amp_mw != 0.0 {
                for edge in [iv.t_start, iv.t_end] {
                    let dt = t - edge;
                    if (0.0..cutoff).contains(&dt) {
                        p += params.transient_amp_mw * (-dt / params.transient_tau_s).exp();
                    }
                }
            }
        }
        if let Some(noise) = &noise {
            p += noise.sample(&mut rng);
        }
        samples.push(p);
    }
    Ok(PowerTrace {
        ecu: ecu.to_string(),
        sample_rate_hz,
        t0: 0.0,
        samples,
    })
}

/// Per-ECU noise seed derived from the run seed.
pub fn ecu_seed(seed: u64, ecu_index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(ecu_index as u64 + 1)
        .rotate_left(17)
}

/// One trace per configured ECU (added devices carry no probe), using the
/// config's per-ECU parameters and sample rate. Traces are independent and
/// synthesized in parallel.
pub fn synthesize_network(
    config: &NetworkConfig,
    output: &SimOutput,
    duration: f64,
    seed: u64,
) -> Result<BTreeMap<String, PowerTrace>, PowerError> {
    config
        .ecu
        .par_iter()
        .enumerate()
        .map(|(i, ecu)| {
            let tl = output.timeline.intervals(&ecu.name).unwrap_or_default();
            let trace = synthesize(
                &ecu.name,
                &config.power_params(&ecu.name),
                tl,
                duration,
                config.power.sample_rate_hz,
                ecu_seed(seed, i),
            )?;
            Ok((ecu.name.clone(), trace))
        })
        .collect()
}

/// Extra power for the bit being driven at `t` within `iv`.
fn bit_power(params: &PowerParams, iv: &TxInterval, t: f64) -> f64 {
    let nbits = iv.bits.len();
    if nbits == 0 {
        return 0.0;
    }
    let bit_time = (iv.t_end - iv.t_start) / nbits as f64;
    let k = (((t - iv.t_start) / bit_time) as usize).min(nbits - 1);
    if iv.bits[k] {
        params.recessive_extra_mw
    } else {
        params.dominant_extra_mw
    }
}
