//! Analytic scorers with known ground-truth regions, used to check the
//! explainers.

use std::ops::Range;

use super::{BlackBoxScorer, Shape};

/// Fraction of `reference[t]` retained at `t`, measured against the
/// replacement value: 1 when unchanged, 0 when fully replaced.
fn retained(reference: f64, baseline: f64, value: f64) -> f64 {
    let scale = (reference - baseline).abs();
    if scale < 1e-12 {
        return if (value - reference).abs() < 1e-12 { 1.0 } else { 0.0 };
    }
    (1.0 - (value - reference).abs() / scale).clamp(0.0, 1.0)
}

fn mean_retained(reference: &[f64], baseline: &[f64], input: &[f64], region: &Range<usize>) -> f64 {
    let n = region.len().max(1) as f64;
    region
        .clone()
        .map(|t| retained(reference[t], baseline[t], input[t]))
        .sum::<f64>()
        / n
}

/// Two classes; class 1 confidence is the mean retained fraction of the key
/// region of a stored reference input.
#[derive(Debug, Clone)]
pub struct KeyedScorer {
    reference: Vec<f64>,
    baseline: Vec<f64>,
    region: Range<usize>,
}

impl KeyedScorer {
    pub fn new(reference: Vec<f64>, baseline: Vec<f64>, region: Range<usize>) -> Self {
        assert_eq!(reference.len(), baseline.len());
        assert!(region.end <= reference.len() && !region.is_empty());
        Self {
            reference,
            baseline,
            region,
        }
    }

    /// Baseline equal to the reference's own mean.
    pub fn with_mean_baseline(reference: Vec<f64>, region: Range<usize>) -> Self {
        let m = crate::stats::mean(&reference);
        let baseline = vec![m; reference.len()];
        Self::new(reference, baseline, region)
    }

    pub fn region(&self) -> Range<usize> {
        self.region.clone()
    }

    pub fn confidence(&self, input: &[f64]) -> f64 {
        mean_retained(&self.reference, &self.baseline, input, &self.region)
    }
}

impl BlackBoxScorer for KeyedScorer {
    fn num_classes(&self) -> usize {
        2
    }

    fn predict(&self, input: &[f64], _shape: Shape) -> Vec<f64> {
        let c = self.confidence(input);
        vec![1.0 - c, c]
    }
}

/// Three classes: class 1 keyed to `region_pos`, class 2 to `region_neg`,
/// class 0 takes the remainder.
#[derive(Debug, Clone)]
pub struct TwoKeyScorer {
    reference: Vec<f64>,
    baseline: Vec<f64>,
    region_pos: Range<usize>,
    region_neg: Range<usize>,
}

impl TwoKeyScorer {
    pub fn with_mean_baseline(reference: Vec<f64>, region_pos: Range<usize>, region_neg: Range<usize>) -> Self {
        assert!(region_pos.end <= reference.len() && region_neg.end <= reference.len());
        let m = crate::stats::mean(&reference);
        let baseline = vec![m; reference.len()];
        Self {
            reference,
            baseline,
            region_pos,
            region_neg,
        }
    }
}

impl BlackBoxScorer for TwoKeyScorer {
    fn num_classes(&self) -> usize {
        3
    }

    fn predict(&self, input: &[f64], _shape: Shape) -> Vec<f64> {
        let a = mean_retained(&self.reference, &self.baseline, input, &self.region_pos);
        let b = mean_retained(&self.reference, &self.baseline, input, &self.region_neg);
        vec![1.0 - 0.5 * (a + b), 0.5 * a, 0.5 * b]
    }
}

/// Two classes; class 1 confidence is a logistic function of the mean level
/// over the key region.
#[derive(Debug, Clone)]
pub struct LevelScorer {
    pub region: Range<usize>,
    pub threshold: f64,
    pub gain: f64,
}

impl LevelScorer {
    pub fn confidence(&self, input: &[f64]) -> f64 {
        let level = crate::stats::mean(&input[self.region.clone()]);
        1.0 / (1.0 + (-self.gain * (level - self.threshold)).exp())
    }
}

impl BlackBoxScorer for LevelScorer {
    fn num_classes(&self) -> usize {
        2
    }

    fn predict(&self, input: &[f64], _shape: Shape) -> Vec<f64> {
        let c = self.confidence(input);
        vec![1.0 - c, c]
    }
}
