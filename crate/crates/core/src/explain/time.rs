//! Time-series saliency from contiguous windowed sub-samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_class, check_input, evaluate_batch, BlackBoxScorer, ExplainError, SaliencyMap, Shape, SignedMap};

/// How masked-out samples are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fill {
    /// Linear between the nearest kept samples; clamped at the series ends.
    #[default]
    Interpolate,
    /// The series mean.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeParams {
    /// Number of sub-samples (K).
    pub k: usize,
    pub l_min: usize,
    pub l_max: usize,
    /// Windows per sub-sample are drawn from 1..=n_max.
    pub n_max: usize,
    pub fill: Fill,
    /// Extra sub-samples allowed to cover indices no draw kept.
    pub coverage_retries: usize,
    pub seed: u64,
}

impl TimeParams {
    /// Defaults for a series of length `t`: K = 1000, window lengths in
    /// `[ceil(t/16), ceil(t/4)]`, up to 3 windows.
    pub fn for_length(t: usize) -> Self {
        Self {
            k: 1000,
            l_min: t.div_ceil(16).max(1),
            l_max: t.div_ceil(4).max(1),
            n_max: 3,
            fill: Fill::Interpolate,
            coverage_retries: 1000,
            seed: 0,
        }
    }

    fn validate(&self, t: usize) -> Result<(), ExplainError> {
        if t < self.l_max {
            return Err(ExplainError::SeriesTooShort { len: t, l_max: self.l_max });
        }
        if self.l_min == 0 || self.l_min > self.l_max {
            return Err(ExplainError::InvalidParams("need 1 <= L_min <= L_max".into()));
        }
        if self.k == 0 || self.n_max == 0 {
            return Err(ExplainError::InvalidParams("K and n_max must be positive".into()));
        }
        Ok(())
    }
}

/// One kept-region mask and the scorer's confidence on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubSample {
    pub mask: Vec<bool>,
    pub weight: f64,
}

/// Maximal runs of kept samples as half-open ranges.
pub fn runs(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &m) in mask.iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, mask.len()));
    }
    out
}

/// Draws one keep mask: up to `n_max` windows with lengths in
/// `[l_min, l_max]`, each placed uniformly among the starts where it neither
/// overlaps nor touches an earlier window. A window with no such start is
/// skipped, so every run keeps its drawn length.
pub fn draw_subsample<R: Rng + ?Sized>(t: usize, params: &TimeParams, rng: &mut R) -> Vec<bool> {
    let n = rng.random_range(1..=params.n_max);
    let mut mask = vec![false; t];
    for _ in 0..n {
        let len = rng.random_range(params.l_min..=params.l_max);
        let free = |s: usize| {
            let lo = s.saturating_sub(1);
            let hi = (s + len + 1).min(t);
            !mask[lo..hi].iter().any(|m| *m)
        };
        let starts: Vec<usize> = (0..=t - len).filter(|&s| free(s)).collect();
        if starts.is_empty() {
            continue;
        }
        let s = starts[rng.random_range(0..starts.len())];
        mask[s..s + len].iter_mut().for_each(|m| *m = true);
    }
    mask
}

/// The series with masked-out samples replaced per `fill`.
pub fn apply_fill(series: &[f64], mask: &[bool], fill: Fill) -> Vec<f64> {
    let mean = crate::stats::mean(series);
    match fill {
        Fill::Mean => series
            .iter()
            .zip(mask)
            .map(|(x, m)| if *m { *x } else { mean })
            .collect(),
        Fill::Interpolate => {
            let mut out = series.to_vec();
            let t = series.len();
            let mut i = 0;
            while i < t {
                if mask[i] {
                    i += 1;
                    continue;
                }
                let a = i;
                while i < t && !mask[i] {
                    i += 1;
                }
                let b = i;
                let left = a.checked_sub(1).map(|j| series[j]);
                let right = (b < t).then(|| series[b]);
                for (j, v) in out.iter_mut().enumerate().take(b).skip(a) {
                    *v = match (left, right) {
                        (Some(l), Some(r)) => {
                            let frac = (j + 1 - a) as f64 / (b + 1 - a) as f64;
                            l + (r - l) * frac
                        }
                        (Some(l), None) => l,
                        (None, Some(r)) => r,
                        (None, None) => mean,
                    };
                }
            }
            out
        }
    }
}

/// `score(t) = sum_k w_k m_k(t) / max(sum_k m_k(t), 1)`.
pub fn weighted_coverage(masks: &[Vec<bool>], weights: &[f64], t: usize) -> Vec<f64> {
    let dense: Vec<Vec<f64>> = masks
        .iter()
        .map(|m| m.iter().map(|k| f64::from(u8::from(*k))).collect())
        .collect();
    let w_ref = weights.first().copied().unwrap_or(0.0);
    super::mask::ratio_estimate(&dense, weights, w_ref, t)
}

/// Sub-sample masks and the scorer's full probability vector for each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeScores {
    pub masks: Vec<Vec<bool>>,
    pub probs: Vec<Vec<f64>>,
}

impl TimeScores {
    pub fn raw(&self, class: usize) -> Vec<f64> {
        let weights: Vec<f64> = self.probs.iter().map(|p| p[class]).collect();
        weighted_coverage(&self.masks, &weights, self.series_len())
    }

    pub fn sub_samples(&self, class: usize) -> Vec<SubSample> {
        self.masks
            .iter()
            .zip(&self.probs)
            .map(|(m, p)| SubSample {
                mask: m.clone(),
                weight: p[class],
            })
            .collect()
    }

    pub fn draws(&self) -> usize {
        self.masks.len()
    }

    /// Min-max normalized map for `class`.
    pub fn saliency(&self, class: usize) -> SaliencyMap {
        SaliencyMap::normalized(Shape::Series(self.series_len()), &self.raw(class))
    }

    /// `raw(pos) - raw(neg)` scaled to `[-1, 1]`.
    pub fn contrast(&self, class_pos: usize, class_neg: usize) -> SignedMap {
        let d: Vec<f64> = self
            .raw(class_pos)
            .iter()
            .zip(self.raw(class_neg))
            .map(|(p, n)| p - n)
            .collect();
        SignedMap::scaled(Shape::Series(self.series_len()), class_pos, class_neg, &d)
    }

    fn series_len(&self) -> usize {
        self.masks.first().map_or(0, Vec::len)
    }
}

/// Draws K sub-samples (plus coverage retries) and scores each filled input.
pub fn time_scores<S: BlackBoxScorer + ?Sized>(
    scorer: &S,
    series: &[f64],
    params: &TimeParams,
) -> Result<TimeScores, ExplainError> {
    let t = series.len();
    params.validate(t)?;
    check_input(series, Shape::Series(t))?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut masks: Vec<Vec<bool>> = (0..params.k).map(|_| draw_subsample(t, params, &mut rng)).collect();
    let mut covered = vec![false; t];
    for m in &masks {
        covered.iter_mut().zip(m).for_each(|(c, k)| *c |= *k);
    }
    let mut retries = 0;
    while covered.iter().any(|c| !c) {
        if retries == params.coverage_retries {
            return Err(ExplainError::InsufficientCoverage {
                uncovered: covered.iter().filter(|c| !**c).count(),
            });
        }
        let m = draw_subsample(t, params, &mut rng);
        covered.iter_mut().zip(&m).for_each(|(c, k)| *c |= *k);
        masks.push(m);
        retries += 1;
    }
    let inputs: Vec<Vec<f64>> = masks.iter().map(|m| apply_fill(series, m, params.fill)).collect();
    let probs = evaluate_batch(scorer, &inputs, Shape::Series(t))?;
    Ok(TimeScores { masks, probs })
}

/// Per-time-unit saliency for `class`, min-max normalized.
pub fn time_explain<S: BlackBoxScorer + ?Sized>(
    scorer: &S,
    series: &[f64],
    class: usize,
    params: &TimeParams,
) -> Result<SaliencyMap, ExplainError> {
    check_class(scorer, class)?;
    Ok(time_scores(scorer, series, params)?.saliency(class))
}

/// `s_pos(t) - s_neg(t)` from one shared set of sub-samples, scaled to
/// `[-1, 1]`. A class contrasted with itself gives the all-zero map.
pub fn contrastive_explain<S: BlackBoxScorer + ?Sized>(
    scorer: &S,
    series: &[f64],
    class_pos: usize,
    class_neg: usize,
    params: &TimeParams,
) -> Result<SignedMap, ExplainError> {
    check_class(scorer, class_pos)?;
    check_class(scorer, class_neg)?;
    Ok(time_scores(scorer, series, params)?.contrast(class_pos, class_neg))
}
