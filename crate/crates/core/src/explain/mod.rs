//! Black-box explanation of scorer outputs.
//!
//! Every explainer here sees the model only through [`BlackBoxScorer`], a
//! forward-evaluation interface. Batches of perturbed inputs are evaluated
//! in parallel and reduced in input order, so results do not depend on the
//! thread count.

mod io;
mod keyed;
mod mask;
mod time;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{read_saliency, write_saliency, SaliencyFile, SaliencySummary};
pub use keyed::{KeyedScorer, LevelScorer, TwoKeyScorer};
pub use mask::{
    deletion_insertion, optimize_mask, single_pass_saliency, Fidelity, MaskOptParams,
    MaskOptResult,
};
pub use time::{
    apply_fill, contrastive_explain, draw_subsample, runs, time_explain, time_scores,
    weighted_coverage, Fill, SubSample, TimeParams, TimeScores,
};

/// Tolerance on the sum of a scorer's probability vector.
pub const PROB_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("class out of range: {class} (scorer has {classes} classes)")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("too few steps: {0} (need at least 2)")]
    TooFewSteps(usize),
    #[error("series too short: length {len} < L_max {l_max}")]
    SeriesTooShort { len: usize, l_max: usize },
    #[error("insufficient coverage: {uncovered} indices never kept")]
    InsufficientCoverage { uncovered: usize },
    #[error("invalid scorer output: {0}")]
    ScorerOutput(String),
    #[error("bad saliency file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Layout of a flat input buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Series(usize),
    Grid { rows: usize, cols: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Series(n) => n,
            Shape::Grid { rows, cols } => rows * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Series(n) => write!(f, "series {n}"),
            Shape::Grid { rows, cols } => write!(f, "grid {rows}x{cols}"),
        }
    }
}

/// A model seen only through forward evaluation: input in, probability
/// vector over classes out. Implementations must be deterministic.
pub trait BlackBoxScorer: Sync {
    fn num_classes(&self) -> usize;
    fn predict(&self, input: &[f64], shape: Shape) -> Vec<f64>;
}

impl<S: BlackBoxScorer + ?Sized> BlackBoxScorer for &S {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }

    fn predict(&self, input: &[f64], shape: Shape) -> Vec<f64> {
        (**self).predict(input, shape)
    }
}

/// Wraps a closure as a scorer.
pub struct FnScorer<F> {
    classes: usize,
    f: F,
}

impl<F> FnScorer<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    pub fn new(classes: usize, f: F) -> Self {
        Self { classes, f }
    }
}

impl<F> BlackBoxScorer for FnScorer<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn num_classes(&self) -> usize {
        self.classes
    }

    fn predict(&self, input: &[f64], _shape: Shape) -> Vec<f64> {
        (self.f)(input)
    }
}

/// Scorer that returns the same distribution for every input.
#[derive(Debug, Clone)]
pub struct ConstantScorer(pub Vec<f64>);

impl BlackBoxScorer for ConstantScorer {
    fn num_classes(&self) -> usize {
        self.0.len()
    }

    fn predict(&self, _input: &[f64], _shape: Shape) -> Vec<f64> {
        self.0.clone()
    }
}

/// Per-element scores in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub shape: Shape,
    pub scores: Vec<f64>,
}

impl SaliencyMap {
    /// Min-max normalizes `raw`; a constant map becomes all zeros.
    pub fn normalized(shape: Shape, raw: &[f64]) -> Self {
        let (lo, hi) = raw
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = hi - lo;
        let scores = if raw.is_empty() || span <= 0.0 || !span.is_finite() {
            vec![0.0; raw.len()]
        } else {
            raw.iter().map(|v| (v - lo) / span).collect()
        };
        Self { shape, scores }
    }

    /// Index of the highest score; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        crate::stats::argmax(&self.scores).unwrap_or(0)
    }

    /// Indices of the `ceil(q * n)` highest scores, ascending.
    pub fn top_fraction(&self, q: f64) -> Vec<usize> {
        top_set(&self.scores, q)
    }

    pub fn is_all_zero(&self) -> bool {
        self.scores.iter().all(|s| *s == 0.0)
    }
}

/// Signed per-element map in `[-1, 1]`, scaled by its largest magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedMap {
    pub shape: Shape,
    pub class_pos: usize,
    pub class_neg: usize,
    pub scores: Vec<f64>,
}

impl SignedMap {
    pub fn scaled(shape: Shape, class_pos: usize, class_neg: usize, raw: &[f64]) -> Self {
        let m = raw.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let scores = if m > 0.0 && m.is_finite() {
            raw.iter().map(|v| v / m).collect()
        } else {
            vec![0.0; raw.len()]
        };
        Self {
            shape,
            class_pos,
            class_neg,
            scores,
        }
    }

    /// The `k` indices with the largest |score|, strongest first.
    pub fn top_abs(&self, k: usize) -> Vec<(usize, f64)> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].abs().total_cmp(&self.scores[a].abs()).then(a.cmp(&b)));
        idx.into_iter().take(k).map(|i| (i, self.scores[i])).collect()
    }
}

/// Replacement values for removed elements.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// The input's own mean everywhere.
    #[default]
    InputMean,
    /// Per-element values, e.g. a corpus mean.
    Reference(Vec<f64>),
}

impl Baseline {
    pub fn values(&self, input: &[f64]) -> Result<Vec<f64>, ExplainError> {
        match self {
            Baseline::InputMean => {
                let m = crate::stats::mean(input);
                Ok(vec![m; input.len()])
            }
            Baseline::Reference(v) if v.len() == input.len() => Ok(v.clone()),
            Baseline::Reference(v) => Err(ExplainError::ShapeMismatch(format!(
                "baseline has {} elements, input {}",
                v.len(),
                input.len()
            ))),
        }
    }
}

pub(crate) fn check_input(input: &[f64], shape: Shape) -> Result<(), ExplainError> {
    if input.len() != shape.len() {
        return Err(ExplainError::ShapeMismatch(format!(
            "{} values for {shape}",
            input.len()
        )));
    }
    if input.is_empty() {
        return Err(ExplainError::InvalidInput("empty input".into()));
    }
    if let Some(i) = input.iter().position(|v| !v.is_finite()) {
        return Err(ExplainError::InvalidInput(format!("non-finite value at index {i}")));
    }
    Ok(())
}

pub(crate) fn check_class<S: BlackBoxScorer + ?Sized>(scorer: &S, class: usize) -> Result<(), ExplainError> {
    let classes = scorer.num_classes();
    if class >= classes {
        return Err(ExplainError::ClassOutOfRange { class, classes });
    }
    Ok(())
}

/// One scorer call with its output validated as a probability vector.
pub fn checked_predict<S: BlackBoxScorer + ?Sized>(
    scorer: &S,
    input: &[f64],
    shape: Shape,
) -> Result<Vec<f64>, ExplainError> {
    let p = scorer.predict(input, shape);
    if p.len() != scorer.num_classes() {
        return Err(ExplainError::ScorerOutput(format!(
            "{} probabilities for {} classes",
            p.len(),
            scorer.num_classes()
        )));
    }
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(ExplainError::ScorerOutput(format!("negative or non-finite entry in {p:?}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(ExplainError::ScorerOutput(format!("probabilities sum to {sum}")));
    }
    Ok(p)
}

/// Evaluates a batch in parallel; output order matches input order.
pub(crate) fn evaluate_batch<S: BlackBoxScorer + ?Sized>(
    scorer: &S,
    inputs: &[Vec<f64>],
    shape: Shape,
) -> Result<Vec<Vec<f64>>, ExplainError> {
    inputs
        .par_iter()
        .map(|x| checked_predict(scorer, x, shape))
        .collect()
}

/// `m * input + (1 - m) * baseline`, elementwise.
pub(crate) fn blend(input: &[f64], baseline: &[f64], mask: &[f64]) -> Vec<f64> {
    input
        .iter()
        .zip(baseline)
        .zip(mask)
        .map(|((x, b), m)| m * x + (1.0 - m) * b)
        .collect()
}

/// Indices of the `ceil(q * n)` largest values (ties to the lower index),
/// returned in ascending order.
pub(crate) fn top_set(values: &[f64], q: f64) -> Vec<usize> {
    let k = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len().max(1));
    let mut idx = rank_desc(values);
    idx.truncate(k.min(values.len()));
    idx.sort_unstable();
    idx
}

/// Indices sorted by descending value, ties by ascending index.
pub(crate) fn rank_desc(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}
