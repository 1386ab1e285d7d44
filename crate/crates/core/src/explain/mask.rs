//! Iterative mask optimization and deletion/insertion fidelity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    blend, check_class, check_input, evaluate_batch, rank_desc, top_set, Baseline, BlackBoxScorer,
    ExplainError, SaliencyMap, Shape,
};

/// RNG stream for the initial mask; masks are drawn from a second stream so
/// the single-pass estimator sees the same masks whatever the init range.
const INIT_STREAM: u64 = 0;
const MASK_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskOptParams {
    /// Masks per iteration (B).
    pub batch: usize,
    /// Iteration cap (I_max).
    pub max_iter: usize,
    pub p_min: f64,
    pub p_max: f64,
    /// Box smoothing width in elements (odd; 1 disables smoothing).
    pub kernel: usize,
    /// Soft-threshold shrinkage per iteration.
    pub lambda: f64,
    /// EMA rate.
    pub eta: f64,
    /// Iterations the top set must stay unchanged before stopping (P).
    pub patience: usize,
    /// Fraction of elements in the tracked top set (q).
    pub top_q: f64,
    /// Range of the uniform random initial mask.
    pub init: (f64, f64),
    pub baseline: Baseline,
    pub seed: u64,
}

impl Default for MaskOptParams {
    fn default() -> Self {
        Self {
            batch: 64,
            max_iter: 50,
            p_min: 0.1,
            p_max: 0.9,
            kernel: 3,
            lambda: 0.01,
            eta: 0.3,
            patience: 5,
            top_q: 0.1,
            init: (0.4, 0.6),
            baseline: Baseline::InputMean,
            seed: 0,
        }
    }
}

impl MaskOptParams {
    pub fn validate(&self) -> Result<(), ExplainError> {
        let bad = |m: &str| Err(ExplainError::InvalidParams(m.to_string()));
        if !(0.0 < self.p_min && self.p_min < self.p_max && self.p_max < 1.0) {
            return bad("need 0 < p_min < p_max < 1");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta must lie in (0, 1]");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if self.batch == 0 || self.max_iter == 0 {
            return bad("batch and max_iter must be positive");
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return bad("kernel width must be odd");
        }
        if !(self.top_q > 0.0 && self.top_q <= 1.0) {
            return bad("top_q must lie in (0, 1]");
        }
        let (lo, hi) = self.init;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return bad("init range must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskOptResult {
    pub saliency: SaliencyMap,
    pub eval_count: usize,
    pub iterations: usize,
    /// Whether the top-set stability rule ended the run before `max_iter`.
    pub converged: bool,
    /// Argmax of the (unnormalized) mask after each iteration.
    pub argmax_trace: Vec<usize>,
}

impl MaskOptResult {
    /// Evaluations spent when the argmax first satisfied `hit`.
    pub fn evals_to_first_hit(&self, batch: usize, hit: impl Fn(usize) -> bool) -> Option<usize> {
        self.argmax_trace
            .iter()
            .position(|&i| hit(i))
            .map(|it| (it + 1) * batch)
    }
}

/// Saliency by iterated importance-weighted mask estimates. Each iteration
/// draws `batch` binary masks from the current keep probabilities, smooths
/// them, scores the blended inputs, and moves the mask toward the
/// confidence-weighted keep frequency with L1 shrinkage.
pub fn optimize_mask<S: BlackBoxScorer + ?Sized>(
    scorer: &S,
    input: &[f64],
    shape: Shape,
    class: usize,
    params: &MaskOptParams,
) -> Result<MaskOptResult, ExplainError> {
    params.validate()?;
    check_input(input, shape)?;
    check_class(scorer, class)?;
    let baseline = params.baseline.values(input)?;
    let n = input.len();

    let mut init_rng = ChaCha8Rng::seed_from_u64(params.seed);
    init_rng.set_stream(INIT_STREAM);
    let mut mask_rng = ChaCha8Rng::seed_from_u64(params.seed);
    mask_rng.set_stream(MASK_STREAM);

    let (lo, hi) = params.init;
    let mut s: Vec<f64> = (0..n)
        .map(|_| if hi > lo { init_rng.random_range(lo..=hi) } else { lo })
        .collect();
    let mut top = top_set(&s, params.top_q);
    let mut stable = 0;
    let mut eval_count = 0;
    let mut argmax_trace = Vec::with_capacity(params.max_iter);
    let mut converged = false;
    let mut first_weight = None;
    let mut informative = false;

    for _ in 0..params.max_iter {
        let keep: Vec<f64> = s.iter().map(|v| v.clamp(params.p_min, params.p_max)).collect();
        let masks: Vec<Vec<f64>> = (0..params.batch)
            .map(|_| {
                let bits: Vec<f64> = keep
                    .iter()
                    .map(|p| if mask_rng.random::<f64>() < *p { 1.0 } else { 0.0 })
                    .collect();
                smooth(&bits, shape, params.kernel)
            })
            .collect();
        let inputs: Vec<Vec<f64>> = masks.iter().map(|m| blend(input, &baseline, m)).collect();
        let probs = evaluate_batch(scorer, &inputs, shape)?;
        eval_count += inputs.len();

        let weights: Vec<f64> = probs.iter().map(|p| p[class]).collect();
        let w_ref = *first_weight.get_or_insert(weights[0]);
        informative |= weights.iter().any(|w| *w != w_ref);
        let estimate = ratio_estimate(&masks, &weights, w_ref, n);
        for t in 0..n {
            let estimate = estimate[t];
            let updated = (1.0 - params.eta) * s[t] + params.eta * estimate;
            s[t] = (updated - params.lambda).max(0.0).clamp(0.0, 1.0);
        }
        argmax_trace.push(crate::stats::argmax(&s).unwrap_or(0));

        let next = top_set(&s, params.top_q);
        if next == top {
            stable += 1;
        } else {
            stable = 0;
            top = next;
        }
        if stable >= params.patience {
            converged = true;
            break;
        }
    }

    // A scorer that never changed its answer carries no evidence; what is
    // left of the random initial mask in `s` is not saliency.
    let saliency = if informative {
        SaliencyMap::normalized(shape, &s)
    } else {
        SaliencyMap::normalized(shape, &vec![0.0; n])
    };
    Ok(MaskOptResult {
        saliency,
        eval_count,
        iterations: argmax_trace.len(),
        converged,
        argmax_trace,
    })
}

/// The fixed-probability single-pass randomized estimator: one batch of
/// masks with keep probability `p`, confidence-weighted keep frequency.
/// Computed as the optimizer with eta = 1, one iteration, no shrinkage and a
/// constant initial mask.
#[allow(clippy::too_many_arguments)]
pub fn single_pass_saliency<S: BlackBoxScorer + ?Sized>(
    scorer: &S,
    input: &[f64],
    shape: Shape,
    class: usize,
    batch: usize,
    p: f64,
    kernel: usize,
    baseline: Baseline,
    seed: u64,
) -> Result<MaskOptResult, ExplainError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(ExplainError::InvalidParams(format!("keep probability {p} outside (0, 1)")));
    }
    let params = MaskOptParams {
        batch,
        max_iter: 1,
        p_min: 0.5 * p,
        p_max: 0.5 * (1.0 + p),
        kernel,
        lambda: 0.0,
        eta: 1.0,
        patience: usize::MAX,
        top_q: 1.0,
        init: (p, p),
        baseline,
        seed,
    };
    optimize_mask(scorer, input, shape, class, &params)
}

/// `sum_b w_b m_b(t) / max(sum_b m_b(t), 1)`, written relative to `w_ref` so
/// that equal weights reproduce `w_ref` exactly wherever the mask mass is at
/// least one.
pub(crate) fn ratio_estimate(masks: &[Vec<f64>], weights: &[f64], w_ref: f64, n: usize) -> Vec<f64> {
    let mut num = vec![0.0; n];
    let mut dev = vec![0.0; n];
    let mut den = vec![0.0; n];
    for (m, w) in masks.iter().zip(weights) {
        for t in 0..n {
            num[t] += w * m[t];
            dev[t] += (w - w_ref) * m[t];
            den[t] += m[t];
        }
    }
    (0..n)
        .map(|t| if den[t] >= 1.0 { w_ref + dev[t] / den[t] } else { num[t] })
        .collect()
}

/// Box mean over a `k`-wide window (k x k for grids), truncated at edges.
pub(crate) fn smooth(bits: &[f64], shape: Shape, k: usize) -> Vec<f64> {
    if k <= 1 {
        return bits.to_vec();
    }
    match shape {
        Shape::Series(_) => box_1d(bits, k),
        Shape::Grid { rows, cols } => {
            let across = (0..rows)
                .flat_map(|r| box_1d(&bits[r * cols..(r + 1) * cols], k))
                .collect::<Vec<_>>();
            let mut out = vec![0.0; rows * cols];
            for c in 0..cols {
                let column: Vec<f64> = (0..rows).map(|r| across[r * cols + c]).collect();
                for (r, v) in box_1d(&column, k).into_iter().enumerate() {
                    out[r * cols + c] = v;
                }
            }
            out
        }
    }
}

fn box_1d(xs: &[f64], k: usize) -> Vec<f64> {
    let n = xs.len();
    let h = k / 2;
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + xs[i];
    }
    (0..n)
        .map(|i| {
            let a = i.saturating_sub(h);
            let b = (i + h + 1).min(n);
            (prefix[b] - prefix[a]) / (b - a) as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub deletion_auc: f64,
    pub insertion_auc: f64,
    pub deletion_curve: Vec<f64>,
    pub insertion_curve: Vec<f64>,
}

/// Deletion and insertion curves over `steps` evenly spaced removal counts,
/// most salient elements first, each integrated by the trapezoid rule over a
/// unit step axis.
pub fn deletion_insertion<S: BlackBoxScorer + ?Sized>(
    scorer: &S,
    input: &[f64],
    saliency: &SaliencyMap,
    class: usize,
    steps: usize,
    baseline: &Baseline,
) -> Result<Fidelity, ExplainError> {
    if steps < 2 {
        return Err(ExplainError::TooFewSteps(steps));
    }
    let shape = saliency.shape;
    check_input(input, shape)?;
    if saliency.scores.len() != input.len() {
        return Err(ExplainError::ShapeMismatch(format!(
            "saliency has {} scores, input {} values",
            saliency.scores.len(),
            input.len()
        )));
    }
    check_class(scorer, class)?;
    let base = baseline.values(input)?;
    let order = rank_desc(&saliency.scores);
    let n = input.len();
    let counts: Vec<usize> = (0..steps)
        .map(|j| ((j * n) as f64 / (steps - 1) as f64).round() as usize)
        .collect();

    let mut inputs = Vec::with_capacity(2 * steps);
    for &c in &counts {
        let mut deleted = input.to_vec();
        for &i in &order[..c] {
            deleted[i] = base[i];
        }
        inputs.push(deleted);
    }
    for &c in &counts {
        let mut inserted = base.clone();
        for &i in &order[..c] {
            inserted[i] = input[i];
        }
        inputs.push(inserted);
    }
    let probs = evaluate_batch(scorer, &inputs, shape)?;
    let conf: Vec<f64> = probs.iter().map(|p| p[class]).collect();
    let (deletion_curve, insertion_curve) = conf.split_at(steps);
    Ok(Fidelity {
        deletion_auc: trapezoid(deletion_curve),
        insertion_auc: trapezoid(insertion_curve),
        deletion_curve: deletion_curve.to_vec(),
        insertion_curve: insertion_curve.to_vec(),
    })
}

/// Trapezoid integral of evenly spaced samples over [0, 1].
fn trapezoid(ys: &[f64]) -> f64 {
    let h = 1.0 / (ys.len() - 1) as f64;
    ys.windows(2).map(|w| 0.5 * (w[0] + w[1]) * h).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::{ConstantScorer, KeyedScorer};

    fn keyed_task(seed: u64) -> (Vec<f64>, KeyedScorer) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..128).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let s = KeyedScorer::with_mean_baseline(x.clone(), 40..60);
        (x, s)
    }

    #[test]
    fn constant_scorer_gives_zero_map() {
        let x: Vec<f64> = (0..32).map(|i| i as f64).collect();
        let r = optimize_mask(
            &ConstantScorer(vec![0.3, 0.7]),
            &x,
            Shape::Series(32),
            1,
            &MaskOptParams::default(),
        )
        .unwrap();
        assert!(r.saliency.is_all_zero());
    }

    #[test]
    fn argmax_lands_in_key_region() {
        let (x, s) = keyed_task(3);
        let r = optimize_mask(&s, &x, Shape::Series(128), 1, &MaskOptParams::default()).unwrap();
        assert!((40..60).contains(&r.saliency.argmax()), "argmax {}", r.saliency.argmax());
        assert_eq!(r.eval_count, r.iterations * 64);
    }

    #[test]
    fn seeded_runs_repeat_exactly() {
        let (x, s) = keyed_task(4);
        let p = MaskOptParams {
            seed: 11,
            ..Default::default()
        };
        let a = optimize_mask(&s, &x, Shape::Series(128), 1, &p).unwrap();
        let b = optimize_mask(&s, &x, Shape::Series(128), 1, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reduces_to_single_pass_estimator() {
        // Independent single-pass computation on the same mask stream.
        let (x, s) = keyed_task(5);
        let (batch, p, kernel, seed) = (40, 0.5, 3, 9);
        let got = single_pass_saliency(&s, &x, Shape::Series(128), 1, batch, p, kernel, Baseline::InputMean, seed)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(MASK_STREAM);
        let m = crate::stats::mean(&x);
        let mut num = [0.0; 128];
        let mut den = [0.0; 128];
        for _ in 0..batch {
            let bits: Vec<f64> = (0..128).map(|_| f64::from(u8::from(rng.random::<f64>() < p))).collect();
            let mask: Vec<f64> = (0..128)
                .map(|i: usize| {
                    let a = i.saturating_sub(1);
                    let b = (i + 2).min(128);
                    bits[a..b].iter().sum::<f64>() / (b - a) as f64
                })
                .collect();
            let xin: Vec<f64> = (0..128).map(|i| mask[i] * x[i] + (1.0 - mask[i]) * m).collect();
            let w = s.confidence(&xin);
            for i in 0..128 {
                num[i] += w * mask[i];
                den[i] += mask[i];
            }
        }
        let raw: Vec<f64> = (0..128).map(|i| num[i] / f64::max(den[i], 1.0)).collect();
        let want = SaliencyMap::normalized(Shape::Series(128), &raw);
        for (g, w) in got.saliency.scores.iter().zip(&want.scores) {
            assert!((g - w).abs() < 1e-9, "{g} vs {w}");
        }
        assert_eq!(got.eval_count, batch);
    }

    #[test]
    fn invalid_arguments() {
        let (x, s) = keyed_task(1);
        assert!(matches!(
            optimize_mask(&s, &x, Shape::Series(128), 2, &MaskOptParams::default()),
            Err(ExplainError::ClassOutOfRange { class: 2, classes: 2 })
        ));
        let mut bad = x.clone();
        bad[0] = f64::INFINITY;
        assert!(matches!(
            optimize_mask(&s, &bad, Shape::Series(128), 1, &MaskOptParams::default()),
            Err(ExplainError::InvalidInput(_))
        ));
        let p = MaskOptParams {
            p_min: 0.9,
            p_max: 0.1,
            ..Default::default()
        };
        assert!(matches!(
            optimize_mask(&s, &x, Shape::Series(128), 1, &p),
            Err(ExplainError::InvalidParams(_))
        ));
    }

    #[test]
    fn grid_smoothing_matches_two_dimensional_box() {
        let bits: Vec<f64> = (0..20).map(|i| f64::from(u8::from(i % 3 == 0))).collect();
        let (rows, cols) = (4, 5);
        let got = smooth(&bits, Shape::Grid { rows, cols }, 3);
        for r in 0..rows {
            for c in 0..cols {
                let mut sum = 0.0;
                let mut cnt = 0.0;
                for rr in r.saturating_sub(1)..(r + 2).min(rows) {
                    for cc in c.saturating_sub(1)..(c + 2).min(cols) {
                        sum += bits[rr * cols + cc];
                        cnt += 1.0;
                    }
                }
                assert!((got[r * cols + c] - sum / cnt).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_step_auc_is_endpoint_mean() {
        let (x, s) = keyed_task(2);
        let sal = SaliencyMap::normalized(Shape::Series(128), &(0..128).map(|i| i as f64).collect::<Vec<_>>());
        let f = deletion_insertion(&s, &x, &sal, 1, 2, &Baseline::InputMean).unwrap();
        let d = &f.deletion_curve;
        assert!((f.deletion_auc - 0.5 * (d[0] + d[1])).abs() < 1e-15);
        assert_eq!(d, &vec![1.0, 0.0]);
        assert!(matches!(
            deletion_insertion(&s, &x, &sal, 1, 1, &Baseline::InputMean),
            Err(ExplainError::TooFewSteps(1))
        ));
    }

    #[test]
    fn oracle_saliency_beats_reverse_order() {
        let (x, s) = keyed_task(6);
        let oracle: Vec<f64> = (0..128).map(|i| f64::from(u8::from((40..60).contains(&i)))).collect();
        let oracle = SaliencyMap::normalized(Shape::Series(128), &oracle);
        let anti = SaliencyMap::normalized(Shape::Series(128), &oracle.scores.iter().map(|v| 1.0 - v).collect::<Vec<_>>());
        let a = deletion_insertion(&s, &x, &oracle, 1, 33, &Baseline::InputMean).unwrap();
        let b = deletion_insertion(&s, &x, &anti, 1, 33, &Baseline::InputMean).unwrap();
        assert!(a.deletion_auc < b.deletion_auc);
        assert!(a.insertion_auc > b.insertion_auc);
    }
}
