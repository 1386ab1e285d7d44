//! Regenerating the salient region of a series from a latent model of its
//! surroundings, keeping the variants the scorer still assigns to the
//! original class.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::explain::{BlackBoxScorer, ExplainError, SaliencyMap, Shape};

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error("corpus too small: {windows} windows, need {needed}")]
    CorpusTooSmall { windows: usize, needed: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("nothing to reconstruct: no saliency at or above {0}")]
    NothingToReconstruct(f64),
    #[error("region too large: span [{start}, {end}) with context {context} does not fit in {len} samples")]
    RegionTooLarge {
        start: usize,
        end: usize,
        context: usize,
        len: usize,
    },
    #[error("no variation measurable: no accepted variants")]
    NoVariation,
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error("bad latent model or bundle: {0}")]
    Format(String),
}

/// Principal-subspace model of length-`window_len` windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentModel {
    pub window_len: usize,
    pub mean: Vec<f64>,
    /// Orthonormal rows, strongest first.
    pub directions: Vec<Vec<f64>>,
    /// Variance of the corpus along each direction, non-increasing.
    pub variances: Vec<f64>,
}

const POWER_MAX_ITER: usize = 20_000;
const POWER_TOL: f64 = 1e-13;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Removes the components along `basis` (twice, for numerical safety).
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for u in basis {
            let c = dot(v, u);
            v.iter_mut().zip(u).for_each(|(x, u)| *x -= c * u);
        }
    }
}

/// Sliding windows of length `l` with stride `max(l / 2, 1)`.
pub fn corpus_windows(corpus: &[Vec<f64>], l: usize) -> Vec<&[f64]> {
    let stride = (l / 2).max(1);
    corpus
        .iter()
        .filter(|s| s.len() >= l)
        .flat_map(|s| (0..=s.len() - l).step_by(stride).map(move |i| &s[i..i + l]))
        .collect()
}

/// Fits the mean and top-`d` principal directions of the corpus windows by
/// power iteration with deflation.
#[allow(clippy::needless_range_loop)]
pub fn fit_latent(corpus: &[Vec<f64>], l: usize, d: usize) -> Result<LatentModel, ReconstructError> {
    if l == 0 || d == 0 || d > l {
        return Err(ReconstructError::InvalidParams(format!("need 1 <= d <= L, got L={l} d={d}")));
    }
    let windows = corpus_windows(corpus, l);
    let needed = 10 * d;
    if windows.len() < needed {
        return Err(ReconstructError::CorpusTooSmall {
            windows: windows.len(),
            needed,
        });
    }
    if windows.iter().any(|w| w.iter().any(|v| !v.is_finite())) {
        return Err(ReconstructError::InvalidParams("non-finite corpus value".into()));
    }
    let n = windows.len() as f64;
    let mut mean = vec![0.0; l];
    for w in &windows {
        mean.iter_mut().zip(*w).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![vec![0.0; l]; l];
    for w in &windows {
        let c: Vec<f64> = w.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..l {
            for j in i..l {
                cov[i][j] += c[i] * c[j];
            }
        }
    }
    for i in 0..l {
        for j in i..l {
            cov[i][j] /= n;
            cov[j][i] = cov[i][j];
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut variances = Vec::with_capacity(d);
    for _ in 0..d {
        let mut v: Vec<f64> = (0..l).map(|_| StandardNormal.sample(&mut rng)).collect();
        orthogonalize(&mut v, &directions);
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let mut lambda = 0.0;
        for _ in 0..POWER_MAX_ITER {
            let mut next: Vec<f64> = cov.iter().map(|row| dot(row, &v)).collect();
            orthogonalize(&mut next, &directions);
            let nn = norm(&next);
            if nn < 1e-300 {
                // No variance left in the complement: any orthonormal
                // completion will do.
                lambda = 0.0;
                break;
            }
            next.iter_mut().for_each(|x| *x /= nn);
            let change = 1.0 - dot(&next, &v).abs();
            v = next;
            lambda = nn;
            if change < POWER_TOL {
                break;
            }
        }
        // Rayleigh quotient is the variance along v.
        let cv: Vec<f64> = cov.iter().map(|row| dot(row, &v)).collect();
        let rq = dot(&v, &cv).max(0.0);
        let var = if lambda == 0.0 { 0.0 } else { rq };
        // Deflate.
        for i in 0..l {
            for j in 0..l {
                cov[i][j] -= var * v[i] * v[j];
            }
        }
        let var = variances.last().map_or(var, |prev: &f64| var.min(*prev));
        directions.push(v);
        variances.push(var);
    }
    Ok(LatentModel {
        window_len: l,
        mean,
        directions,
        variances,
    })
}

impl LatentModel {
    pub fn dims(&self) -> usize {
        self.directions.len()
    }

    pub fn encode(&self, window: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = window.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        self.directions.iter().map(|u| dot(u, &c)).collect()
    }

    pub fn decode(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (u, zi) in self.directions.iter().zip(z) {
            out.iter_mut().zip(u).for_each(|(o, u)| *o += zi * u);
        }
        out
    }

    /// `decode(encode(w))`: the orthogonal projection onto the affine subspace.
    pub fn project(&self, window: &[f64]) -> Vec<f64> {
        self.decode(&self.encode(window))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("latent model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ReconstructError> {
        let m: Self = serde_json::from_str(text).map_err(|e| ReconstructError::Format(e.to_string()))?;
        let l = m.window_len;
        let ok = m.mean.len() == l
            && m.directions.len() == m.variances.len()
            && m.directions.len() <= l
            && m.directions.iter().all(|u| u.len() == l);
        if !ok {
            return Err(ReconstructError::Format("inconsistent dimensions".into()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructParams {
    pub k_variants: usize,
    /// Latent jitter in units of each direction's standard deviation.
    pub sigma: f64,
    /// Saliency threshold defining the region.
    pub tau: f64,
    /// Largest accepted drop in original-class confidence.
    pub delta: f64,
    pub seed: u64,
}

impl Default for ReconstructParams {
    fn default() -> Self {
        Self {
            k_variants: 32,
            sigma: 0.5,
            tau: 0.5,
            delta: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    #[serde(skip)]
    pub series: Vec<f64>,
    pub z: Vec<f64>,
    /// Euclidean distance of `z` from the context code.
    pub context_distance: f64,
    /// Scorer confidence on the original class.
    pub confidence: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    /// Bounding span of the salient region, half-open.
    pub span: (usize, usize),
    /// Crossfade width on each side of the span.
    pub margin: usize,
    pub original_class: usize,
    pub original_confidence: f64,
    pub z_context: Vec<f64>,
    pub variants: Vec<Variant>,
}

impl Reconstruction {
    pub fn accepted(&self) -> impl Iterator<Item = &Variant> {
        self.variants.iter().filter(|v| v.accepted)
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.variants.is_empty() {
            return 0.0;
        }
        self.accepted().count() as f64 / self.variants.len() as f64
    }
}

/// Fill for `n` samples from the decoded window `tile`: full-length tiles
/// from the left, the last one aligned to the right end, blended with linear
/// ramps of width `m` at seams.
fn tile_fill(tile: &[f64], n: usize, m: usize) -> Vec<f64> {
    let l = tile.len();
    if n <= l {
        let off = (l - n) / 2;
        return tile[off..off + n].to_vec();
    }
    let stride = (l - m).max(1);
    let mut starts: Vec<usize> = (0..).map(|j| j * stride).take_while(|s| s + l < n).collect();
    starts.push(n - l);
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    let last = starts.len() - 1;
    for (j, &s) in starts.iter().enumerate() {
        for (o, v) in tile.iter().enumerate() {
            let mut w: f64 = 1.0;
            if j > 0 {
                w = w.min((o + 1) as f64 / (m + 1) as f64);
            }
            if j < last {
                w = w.min((l - o) as f64 / (m + 1) as f64);
            }
            num[s + o] += w * v;
            den[s + o] += w;
        }
    }
    num.iter().zip(&den).map(|(a, b)| a / b).collect()
}

/// Series with `[a - m, b + m)` replaced by the decoded `z`, blended into the
/// original over the `m` margin samples on each side.
fn splice(input: &[f64], model: &LatentModel, z: &[f64], a: usize, b: usize, m: usize) -> Vec<f64> {
    let fill = tile_fill(&model.decode(z), b - a + 2 * m, m);
    let mut out = input.to_vec();
    for (i, f) in fill.iter().enumerate() {
        let t = a - m + i;
        let alpha = if t < a {
            (i + 1) as f64 / (m + 1) as f64
        } else if t >= b {
            (b + m - t) as f64 / (m + 1) as f64
        } else {
            1.0
        };
        out[t] = (1.0 - alpha) * input[t] + alpha * f;
    }
    out
}

/// Generates `k_variants` candidates for the salient span around the
/// averaged latent code of its two flanking context windows, and keeps those
/// that preserve the scorer's argmax within a confidence drop of `delta`.
pub fn reconstruct_variants<S: BlackBoxScorer + ?Sized>(
    input: &[f64],
    saliency: &SaliencyMap,
    model: &LatentModel,
    scorer: &S,
    params: &ReconstructParams,
) -> Result<Reconstruction, ReconstructError> {
    if params.k_variants == 0 || !(params.sigma >= 0.0) || !(params.delta >= 0.0) {
        return Err(ReconstructError::InvalidParams(format!("{params:?}")));
    }
    let t_len = input.len();
    let shape = Shape::Series(t_len);
    if saliency.scores.len() != t_len {
        return Err(ExplainError::ShapeMismatch(format!(
            "saliency has {} scores, input {}",
            saliency.scores.len(),
            t_len
        ))
        .into());
    }
    let salient: Vec<usize> = (0..t_len).filter(|&t| saliency.scores[t] >= params.tau).collect();
    let (a, b) = match (salient.first(), salient.last()) {
        (Some(&a), Some(&b)) => (a, b + 1),
        _ => return Err(ReconstructError::NothingToReconstruct(params.tau)),
    };
    let l = model.window_len;
    if a < l || b + l > t_len {
        return Err(ReconstructError::RegionTooLarge {
            start: a,
            end: b,
            context: l,
            len: t_len,
        });
    }
    let m = l / 8;

    let original = crate::explain::checked_predict(scorer, input, shape)?;
    let original_class = crate::stats::argmax(&original).unwrap_or(0);
    let original_confidence = original[original_class];

    let left = model.encode(&input[a - l..a]);
    let right = model.encode(&input[b..b + l]);
    let z_ctx: Vec<f64> = left.iter().zip(&right).map(|(x, y)| 0.5 * (x + y)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let codes: Vec<Vec<f64>> = (0..params.k_variants)
        .map(|i| {
            z_ctx
                .iter()
                .zip(&model.variances)
                .map(|(z, var)| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    if i == 0 {
                        *z
                    } else {
                        z + params.sigma * var.sqrt() * e
                    }
                })
                .collect()
        })
        .collect();
    let series: Vec<Vec<f64>> = codes.iter().map(|z| splice(input, model, z, a, b, m)).collect();
    let probs = crate::explain::evaluate_batch(scorer, &series, shape)?;

    let variants = codes
        .into_iter()
        .zip(series)
        .zip(probs)
        .map(|((z, series), p)| {
            let confidence = p[original_class];
            let same = crate::stats::argmax(&p) == Some(original_class);
            Variant {
                context_distance: crate::stats::euclidean(&z, &z_ctx),
                accepted: same && original_confidence - confidence <= params.delta,
                series,
                z,
                confidence,
            }
        })
        .collect();
    Ok(Reconstruction {
        span: (a, b),
        margin: m,
        original_class,
        original_confidence,
        z_context: z_ctx,
        variants,
    })
}

/// Mean pairwise distance between accepted latent codes, over the square
/// root of the total latent variance. Zero for a single variant.
pub fn variation_score(variants: &[Variant], variances: &[f64]) -> Result<f64, ReconstructError> {
    let accepted: Vec<&Variant> = variants.iter().filter(|v| v.accepted).collect();
    if accepted.is_empty() {
        return Err(ReconstructError::NoVariation);
    }
    if accepted.len() == 1 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..accepted.len() {
        for j in i + 1..accepted.len() {
            total += crate::stats::euclidean(&accepted[i].z, &accepted[j].z);
            pairs += 1;
        }
    }
    let scale = variances.iter().sum::<f64>().sqrt();
    let mean = total / pairs as f64;
    Ok(if scale > 0.0 { mean / scale } else { 0.0 })
}

/// Everything needed to inspect a reconstruction run, as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantBundle {
    pub original: Vec<f64>,
    pub reconstruction: Reconstruction,
    pub acceptance_rate: f64,
    pub variation_score: Option<f64>,
}

impl VariantBundle {
    pub fn new(original: Vec<f64>, reconstruction: Reconstruction, variances: &[f64]) -> Self {
        let variation_score = variation_score(&reconstruction.variants, variances).ok();
        Self {
            original,
            acceptance_rate: reconstruction.acceptance_rate(),
            reconstruction,
            variation_score,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ReconstructError> {
        serde_json::from_str(text).map_err(|e| ReconstructError::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::{FnScorer, LevelScorer};

    fn two_factor_corpus(seed: u64) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let l = 16;
        let u: Vec<f64> = (0..l).map(|i| (2.0 * std::f64::consts::PI * i as f64 / l as f64).sin()).collect();
        let v: Vec<f64> = (0..l).map(|i| if i < l / 2 { 1.0 } else { -1.0 }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Each series is exactly one window long.
        let corpus = (0..200)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                u.iter().zip(&v).map(|(x, y)| 3.0 * a * x + b * y).collect()
            })
            .collect();
        (corpus, u, v)
    }

    #[test]
    fn two_factor_subspace_recovered() {
        let (corpus, u, v) = two_factor_corpus(1);
        let m = fit_latent(&corpus, 16, 2).unwrap();
        // Both generators lie in the span of the fitted directions.
        for g in [&u, &v] {
            let n = norm(g);
            let unit: Vec<f64> = g.iter().map(|x| x / n).collect();
            let inside: f64 = m.directions.iter().map(|d| dot(d, &unit).powi(2)).sum();
            let angle = inside.min(1.0).sqrt().acos();
            assert!(angle < 1e-3, "angle {angle}");
        }
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&m.directions[i], &m.directions[j]) - want).abs() < 1e-6);
            }
        }
        assert!(m.variances[0] >= m.variances[1]);
    }

    #[test]
    fn constant_corpus_has_zero_variance() {
        let corpus = vec![vec![2.5; 64]; 4];
        let m = fit_latent(&corpus, 8, 3).unwrap();
        assert!(m.mean.iter().all(|v| (*v - 2.5).abs() < 1e-12));
        assert!(m.variances.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn complete_basis_reconstructs_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let corpus: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..40).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let m = fit_latent(&corpus, 4, 4).unwrap();
        for w in corpus_windows(&corpus, 4) {
            let r = m.project(w);
            assert!(crate::stats::euclidean(&r, w) < 1e-8);
        }
    }

    #[test]
    fn corpus_too_small() {
        let corpus = vec![vec![0.0; 20]];
        assert!(matches!(
            fit_latent(&corpus, 8, 1),
            Err(ReconstructError::CorpusTooSmall { windows: 4, needed: 10 })
        ));
    }

    #[test]
    fn variation_closed_forms() {
        let v = |z: Vec<f64>| Variant {
            series: vec![],
            z,
            context_distance: 0.0,
            confidence: 1.0,
            accepted: true,
        };
        assert_eq!(variation_score(&[v(vec![1.0, 2.0])], &[1.0, 1.0]).unwrap(), 0.0);
        let d = 4;
        let a = v(vec![0.0; d]);
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        let s = variation_score(&[a, v(e)], &vec![1.0; d]).unwrap();
        assert!((s - 1.0 / (d as f64).sqrt()).abs() < 1e-15);
        let mut rejected = v(vec![0.0]);
        rejected.accepted = false;
        assert!(matches!(variation_score(&[rejected], &[1.0]), Err(ReconstructError::NoVariation)));
    }

    fn plateau_model() -> LatentModel {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let corpus: Vec<Vec<f64>> = (0..60)
            .map(|_| {
                let level: f64 = StandardNormal.sample(&mut rng);
                (0..64).map(|_| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    level + 0.01 * e
                }).collect()
            })
            .collect();
        fit_latent(&corpus, 16, 2).unwrap()
    }

    #[test]
    fn self_reconstruction_at_zero_jitter() {
        let model = plateau_model();
        let x = vec![0.8; 96];
        let mut sal = vec![0.0; 96];
        sal[40..56].iter_mut().for_each(|s| *s = 1.0);
        let sal = SaliencyMap::normalized(Shape::Series(96), &sal);
        let scorer = LevelScorer {
            region: 40..56,
            threshold: 0.5,
            gain: 10.0,
        };
        let p = ReconstructParams {
            sigma: 0.0,
            k_variants: 3,
            ..Default::default()
        };
        let r = reconstruct_variants(&x, &sal, &model, &scorer, &p).unwrap();
        let v = &r.variants[0];
        assert!(v.accepted);
        let err = crate::stats::euclidean(&v.series[40..56], &x[40..56]);
        assert!(err < 0.05, "error {err}");
        // Only the span plus margins may change.
        let (a, b) = r.span;
        for t in (0..a - r.margin).chain(b + r.margin..96) {
            assert_eq!(v.series[t].to_bits(), x[t].to_bits());
        }
    }

    #[test]
    fn irrelevant_region_accepts_everything() {
        let model = plateau_model();
        let x: Vec<f64> = (0..96).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut sal = vec![0.0; 96];
        sal[40..50].iter_mut().for_each(|s| *s = 1.0);
        let sal = SaliencyMap::normalized(Shape::Series(96), &sal);
        let scorer = FnScorer::new(2, |v: &[f64]| {
            let c = 1.0 / (1.0 + (-v[5..15].iter().sum::<f64>()).exp());
            vec![1.0 - c, c]
        });
        let r = reconstruct_variants(&x, &sal, &model, &scorer, &ReconstructParams::default()).unwrap();
        assert_eq!(r.acceptance_rate(), 1.0);
    }

    #[test]
    fn region_errors() {
        let model = plateau_model();
        let x = vec![0.0; 40];
        let scorer = LevelScorer {
            region: 0..4,
            threshold: 0.0,
            gain: 1.0,
        };
        let empty = SaliencyMap::normalized(Shape::Series(40), &[0.0; 40]);
        assert!(matches!(
            reconstruct_variants(&x, &empty, &model, &scorer, &ReconstructParams::default()),
            Err(ReconstructError::NothingToReconstruct(_))
        ));
        let mut s = vec![0.0; 40];
        s[5] = 1.0;
        let edge = SaliencyMap::normalized(Shape::Series(40), &s);
        assert!(matches!(
            reconstruct_variants(&x, &edge, &model, &scorer, &ReconstructParams::default()),
            Err(ReconstructError::RegionTooLarge { .. })
        ));
    }

    #[test]
    fn tile_fill_is_seamless_for_constant_tiles() {
        let f = tile_fill(&[2.0; 8], 30, 1);
        assert!(f.iter().all(|v| (v - 2.0).abs() < 1e-15));
        assert_eq!(tile_fill(&[1.0, 2.0, 3.0, 4.0], 2, 0), vec![2.0, 3.0]);
    }
}
