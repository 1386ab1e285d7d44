use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{PowerError, PowerTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Transmitting,
    Idle,
}

impl Label {
    pub fn is_transmitting(self) -> bool {
        self == Label::Transmitting
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledWindow {
    pub ecu: String,
    pub t_start: f64,
    pub t_end: f64,
    pub label: Label,
    /// Index into the span list of the span overlapping this window most,
    /// when the window is labeled transmitting.
    pub frame_ref: Option<usize>,
    pub samples: Range<usize>,
}

/// Cuts `trace` into tumbling windows of `window_s` (rounded to whole
/// samples; a trailing partial window is dropped) and labels each one
/// transmitting when the transmit time inside it is at least
/// `overlap_threshold` of the window. Labels come from `spans` alone.
pub fn label_windows(
    trace: &PowerTrace,
    spans: &[(f64, f64)],
    window_s: f64,
    overlap_threshold: f64,
) -> Result<Vec<LabeledWindow>, PowerError> {
    if !(window_s.is_finite() && window_s > 0.0) {
        return Err(PowerError::InvalidArgument(format!("window_s {window_s}")));
    }
    if !(overlap_threshold > 0.0 && overlap_threshold <= 1.0) {
        return Err(PowerError::InvalidArgument(format!(
            "overlap threshold {overlap_threshold}"
        )));
    }
    let w = ((window_s * trace.sample_rate_hz).round() as usize).max(1);
    if w > trace.len() {
        return Err(PowerError::WindowTooLarge {
            window: w,
            len: trace.len(),
        });
    }
    let span_len = w as f64 / trace.sample_rate_hz;
    let mut out = Vec::with_capacity(trace.len() / w);
    let mut lo = 0;
    for k in 0..trace.len() / w {
        let a = trace.time_of(k * w);
        let b = a + span_len;
        while lo < spans.len() && spans[lo].1 <= a {
            lo += 1;
        }
        let mut covered = 0.0;
        let mut best: Option<(usize, f64)> = None;
        for (j, &(s, e)) in spans.iter().enumerate().skip(lo) {
            if s >= b {
                break;
            }
            let ov = e.min(b) - s.max(a);
            if ov > 0.0 {
                covered += ov;
                if best.is_none_or(|(_, o)| ov > o) {
                    best = Some((j, ov));
                }
            }
        }
        let label = if covered / span_len >= overlap_threshold {
            Label::Transmitting
        } else {
            Label::Idle
        };
        out.push(LabeledWindow {
            ecu: trace.ecu.clone(),
            t_start: a,
            t_end: b,
            label,
            frame_ref: best.filter(|_| label.is_transmitting()).map(|(j, _)| j),
            samples: k * w..(k + 1) * w,
        });
    }
    Ok(out)
}
