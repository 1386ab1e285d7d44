//! Sender authentication from power traces: window features, one
//! transmit-state classifier per ECU, per-frame verdicts and metrics.
//!
//! Nothing here reads the ground-truth `spoofed` flag. Authentication sees
//! only traces, the frame's id and bus occupancy interval, and the id
//! ownership map.

mod classifier;
mod features;
mod io;
mod metrics;

pub use classifier::{LogisticModel, Standardizer, TrainHyper, TransmitClassifier};
pub use features::{extract_features, FeatureVector, FEATURE_COUNT, FEATURE_NAMES, MIN_WINDOW_SAMPLES};
pub use io::{read_verdicts, write_verdicts, VerdictRecord};
pub use metrics::{evaluate, roc_sweep, Metrics, RocPoint};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::can::{stuffed_len, CanFrame};
use crate::power::{label_windows, PowerError, PowerTrace};

pub const DEFAULT_THETA: f64 = 0.5;
pub const DEFAULT_OVERLAP_THRESHOLD: f64 = 0.5;
/// Shorter than most frames so short frames still yield transmitting
/// training windows; longer frames are center-cropped.
pub const DEFAULT_WINDOW_S: f64 = 160e-6;

#[derive(Debug, Error)]
pub enum AuthError {
    #[error("insufficient samples: {0} < 8")]
    InsufficientSamples(usize),
    #[error("degenerate labels")]
    DegenerateLabels,
    #[error("degenerate labels for {0}: both classes are required")]
    DegenerateLabelsFor(String),
    #[error("unknown id {0:#05x}")]
    UnknownId(u16),
    #[error("no trace for ECU {0}")]
    MissingTrace(String),
    #[error("window [{start}, {end}) s is not covered by the trace of {ecu}")]
    WindowOutOfTrace { ecu: String, start: f64, end: f64 },
    #[error("length mismatch: {verdicts} verdicts for {truth} ground-truth records")]
    LengthMismatch { verdicts: usize, truth: usize },
    #[error("no verdicts")]
    NoVerdicts,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Power(#[from] PowerError),
    #[error("model file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A frame as seen on the bus: id and occupancy interval. Carries no sender.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameObservation {
    pub id: u16,
    pub t_start: f64,
    pub t_end: f64,
}

impl FrameObservation {
    pub fn from_frame(frame: &CanFrame, bitrate_bps: f64) -> Self {
        let t = frame.timestamp();
        Self {
            id: frame.id(),
            t_start: t,
            t_end: t + stuffed_len(frame) as f64 / bitrate_bps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Authentic,
    Alert,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthVerdict {
    pub t: f64,
    pub id: u16,
    pub claimed: String,
    pub p_claimed: f64,
    pub p_others: f64,
    pub score: f64,
    pub decision: Decision,
}

impl AuthVerdict {
    pub fn is_alert(&self) -> bool {
        self.decision == Decision::Alert
    }

    fn from_probs(obs: &FrameObservation, claimed: &str, p_claimed: f64, p_others: f64, theta: f64) -> Self {
        let score = p_claimed - p_others;
        Self {
            t: obs.t_start,
            id: obs.id,
            claimed: claimed.to_string(),
            p_claimed,
            p_others,
            score,
            decision: if score < theta {
                Decision::Alert
            } else {
                Decision::Authentic
            },
        }
    }
}

/// Everything authentication needs, stored in the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthModel {
    pub theta: f64,
    pub window_s: f64,
    pub overlap_threshold: f64,
    pub hyper: TrainHyper,
    /// Frame id to legitimate sender.
    pub ownership: BTreeMap<u16, String>,
    pub classifiers: BTreeMap<String, TransmitClassifier>,
}

impl AuthModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AuthError> {
        let m: Self = serde_json::from_str(text).map_err(|e| AuthError::Format(e.to_string()))?;
        for (ecu, c) in &m.classifiers {
            let s = &c.model.standardizer;
            let bad = s.mean.len() != FEATURE_COUNT
                || s.std.len() != FEATURE_COUNT
                || s.mask.len() != FEATURE_COUNT
                || c.model.weights.len() != s.kept()
                || s.std.iter().zip(&s.mask).any(|(sd, keep)| *keep && !(*sd > 0.0));
            if bad {
                return Err(AuthError::Format(format!("inconsistent classifier for {ecu}")));
            }
        }
        Ok(m)
    }
}

/// Labeled feature vectors per ECU from tumbling windows that lie inside
/// `[t_from, t_to)`.
pub fn training_set(
    traces: &BTreeMap<String, PowerTrace>,
    spans: &BTreeMap<String, Vec<(f64, f64)>>,
    window_s: f64,
    overlap_threshold: f64,
    t_from: f64,
    t_to: f64,
) -> Result<BTreeMap<String, Vec<(FeatureVector, bool)>>, AuthError> {
    let mut out = BTreeMap::new();
    for (ecu, trace) in traces {
        let ecu_spans = spans.get(ecu).map(Vec::as_slice).unwrap_or_default();
        let windows = label_windows(trace, ecu_spans, window_s, overlap_threshold)?;
        let data = windows
            .par_iter()
            .filter(|w| w.t_start >= t_from && w.t_end <= t_to)
            .map(|w| Ok((extract_features(&trace.samples[w.samples.clone()])?, w.label.is_transmitting())))
            .collect::<Result<Vec<_>, AuthError>>()?;
        out.insert(ecu.clone(), data);
    }
    Ok(out)
}

/// Trains one classifier per ECU.
pub fn fit(
    dataset: &BTreeMap<String, Vec<(FeatureVector, bool)>>,
    hyper: &TrainHyper,
) -> Result<BTreeMap<String, TransmitClassifier>, AuthError> {
    dataset
        .par_iter()
        .map(|(ecu, data)| Ok((ecu.clone(), TransmitClassifier::fit(ecu, data, hyper)?.0)))
        .collect()
}

/// Training settings stored alongside the classifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub window_s: f64,
    pub overlap_threshold: f64,
    pub theta: f64,
    pub hyper: TrainHyper,
    /// Only windows inside `[t_from, t_to)` are used.
    pub t_from: f64,
    pub t_to: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            window_s: DEFAULT_WINDOW_S,
            overlap_threshold: DEFAULT_OVERLAP_THRESHOLD,
            theta: DEFAULT_THETA,
            hyper: TrainHyper::default(),
            t_from: 0.0,
            t_to: f64::INFINITY,
        }
    }
}

/// Builds the training set and fits every ECU's classifier.
pub fn train(
    traces: &BTreeMap<String, PowerTrace>,
    spans: &BTreeMap<String, Vec<(f64, f64)>>,
    ownership: BTreeMap<u16, String>,
    settings: &TrainSettings,
) -> Result<AuthModel, AuthError> {
    let data = training_set(
        traces,
        spans,
        settings.window_s,
        settings.overlap_threshold,
        settings.t_from,
        settings.t_to,
    )?;
    let classifiers = fit(&data, &settings.hyper)?;
    Ok(AuthModel {
        theta: settings.theta,
        window_s: settings.window_s,
        overlap_threshold: settings.overlap_threshold,
        hyper: settings.hyper,
        ownership,
        classifiers,
    })
}

/// Samples of `trace` in the window of `window_s` centered on the frame:
/// padded symmetrically when the frame is shorter, center-cropped when longer.
pub fn frame_window<'a>(
    trace: &'a PowerTrace,
    obs: &FrameObservation,
    window_s: f64,
) -> Result<&'a [f64], AuthError> {
    Ok(&trace.samples[frame_window_range(trace, obs, window_s)?])
}

/// Sample indices of [`frame_window`].
pub fn frame_window_range(
    trace: &PowerTrace,
    obs: &FrameObservation,
    window_s: f64,
) -> Result<std::ops::Range<usize>, AuthError> {
    let n = ((window_s * trace.sample_rate_hz).round() as usize).max(1);
    let mid = 0.5 * (obs.t_start + obs.t_end);
    let start_t = mid - 0.5 * n as f64 / trace.sample_rate_hz;
    let out_of_trace = || AuthError::WindowOutOfTrace {
        ecu: trace.ecu.clone(),
        start: start_t,
        end: start_t + n as f64 / trace.sample_rate_hz,
    };
    if start_t < trace.t0 - 1e-12 {
        return Err(out_of_trace());
    }
    let i = trace.index_at(start_t);
    if i + n > trace.len() {
        return Err(out_of_trace());
    }
    Ok(i..i + n)
}

/// Evaluates every ECU's classifier on the frame-aligned window and compares
/// the claimed sender's transmit probability with the strongest other ECU.
pub fn authenticate(
    obs: &FrameObservation,
    traces: &BTreeMap<String, PowerTrace>,
    model: &AuthModel,
    theta: f64,
) -> Result<AuthVerdict, AuthError> {
    let claimed = model.ownership.get(&obs.id).ok_or(AuthError::UnknownId(obs.id))?;
    let mut p_claimed = None;
    let mut p_others: f64 = 0.0;
    for (ecu, clf) in &model.classifiers {
        let trace = traces.get(ecu).ok_or_else(|| AuthError::MissingTrace(ecu.clone()))?;
        let features = extract_features(frame_window(trace, obs, model.window_s)?)?;
        let p = clf.p_transmit(&features);
        if ecu == claimed {
            p_claimed = Some(p);
        } else {
            p_others = p_others.max(p);
        }
    }
    let p_claimed = p_claimed.ok_or_else(|| AuthError::MissingTrace(claimed.clone()))?;
    Ok(AuthVerdict::from_probs(obs, claimed, p_claimed, p_others, theta))
}

/// [`authenticate`] over many frames in parallel; output order matches input.
/// Unknown ids become alerts with zero probabilities and claimed sender `?`.
pub fn authenticate_all(
    observations: &[FrameObservation],
    traces: &BTreeMap<String, PowerTrace>,
    model: &AuthModel,
    theta: f64,
) -> Result<Vec<AuthVerdict>, AuthError> {
    observations
        .par_iter()
        .map(|obs| match authenticate(obs, traces, model, theta) {
            Err(AuthError::UnknownId(_)) => Ok(AuthVerdict::from_probs(obs, "?", 0.0, 0.0, theta)),
            other => other,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::can::BitStream;
    use crate::power::{synthesize, PowerParams};
    use crate::sim::TxInterval;

    const RATE: f64 = 1e6;
    const BITRATE: f64 = 500_000.0;

    fn quiet() -> PowerParams {
        PowerParams {
            noise_sigma_mw: 0.0,
            drift_mw_per_s: 0.0,
            ..PowerParams::default()
        }
    }

    fn tx(t: f64, event: usize) -> TxInterval {
        let bits: BitStream = "0110100111010001011101001010011100101101110100101001".parse().unwrap();
        TxInterval {
            t_start: t,
            t_end: t + bits.len() as f64 / BITRATE,
            bits,
            event,
        }
    }

    /// Two ECUs alternating frames every 500 us, noiseless traces.
    #[allow(clippy::type_complexity)]
    fn scenario() -> (BTreeMap<String, PowerTrace>, BTreeMap<String, Vec<(f64, f64)>>) {
        let a: Vec<TxInterval> = (0..40).map(|k| tx(50e-6 + k as f64 * 1e-3, k)).collect();
        let b: Vec<TxInterval> = (0..40).map(|k| tx(550e-6 + k as f64 * 1e-3, k)).collect();
        let mut traces = BTreeMap::new();
        let mut spans = BTreeMap::new();
        for (name, tl) in [("A", &a), ("B", &b)] {
            traces.insert(name.to_string(), synthesize(name, &quiet(), tl, 0.041, RATE, 1).unwrap());
            spans.insert(name.to_string(), tl.iter().map(|i| (i.t_start, i.t_end)).collect());
        }
        (traces, spans)
    }

    fn model(traces: &BTreeMap<String, PowerTrace>, spans: &BTreeMap<String, Vec<(f64, f64)>>) -> AuthModel {
        let data = training_set(traces, spans, 100e-6, 0.5, 0.0, 0.041).unwrap();
        let hyper = TrainHyper::default();
        AuthModel {
            theta: DEFAULT_THETA,
            window_s: 100e-6,
            overlap_threshold: 0.5,
            hyper,
            ownership: [(0x100, "A".to_string()), (0x200, "B".to_string())].into(),
            classifiers: fit(&data, &hyper).unwrap(),
        }
    }

    #[test]
    fn legitimate_and_impersonated_frames() {
        let (traces, spans) = scenario();
        let m = model(&traces, &spans);
        // A really sent at 10.05 ms, claiming its own id.
        let (s, e) = spans["A"][10];
        let legit = FrameObservation { id: 0x100, t_start: s, t_end: e };
        let v = authenticate(&legit, &traces, &m, DEFAULT_THETA).unwrap();
        assert!(v.p_claimed > 0.95 && v.p_others < 0.05, "{v:?}");
        assert_eq!(v.decision, Decision::Authentic);
        // Same interval presented with B's id: B was idle.
        let spoof = FrameObservation { id: 0x200, ..legit };
        let v = authenticate(&spoof, &traces, &m, DEFAULT_THETA).unwrap();
        assert!(v.p_claimed < 0.05, "{v:?}");
        assert_eq!(v.decision, Decision::Alert);
    }

    #[test]
    fn unknown_id_is_an_error_at_api_level() {
        let (traces, spans) = scenario();
        let m = model(&traces, &spans);
        let obs = FrameObservation { id: 0x7AA, t_start: 0.01, t_end: 0.0101 };
        assert!(matches!(authenticate(&obs, &traces, &m, 0.5), Err(AuthError::UnknownId(0x7AA))));
        let all = authenticate_all(&[obs], &traces, &m, 0.5).unwrap();
        assert!(all[0].is_alert());
    }

    #[test]
    fn window_must_lie_inside_trace() {
        let (traces, spans) = scenario();
        let m = model(&traces, &spans);
        let obs = FrameObservation { id: 0x100, t_start: 0.04095, t_end: 0.0411 };
        assert!(matches!(
            authenticate(&obs, &traces, &m, 0.5),
            Err(AuthError::WindowOutOfTrace { .. })
        ));
    }

    #[test]
    fn idle_only_training_is_degenerate() {
        let (traces, _) = scenario();
        let data = training_set(&traces, &BTreeMap::new(), 100e-6, 0.5, 0.0, 1.0).unwrap();
        assert!(matches!(
            fit(&data, &TrainHyper::default()),
            Err(AuthError::DegenerateLabelsFor(_))
        ));
    }

    #[test]
    fn model_json_round_trip() {
        let (traces, spans) = scenario();
        let m = model(&traces, &spans);
        let back = AuthModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let mut broken = m.clone();
        broken.classifiers.get_mut("A").unwrap().model.weights.pop();
        assert!(AuthModel::from_json(&broken.to_json()).is_err());
    }
}
