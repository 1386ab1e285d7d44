use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, FEATURE_COUNT};
use super::AuthError;

/// Below this a feature's spread is treated as zero and the feature dropped.
const MIN_STD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            lr: 0.5,
            epochs: 1000,
            l2: 1e-4,
        }
    }
}

/// Per-feature z-scoring with the statistics frozen at fit time. Features
/// whose spread is zero are masked out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub mask: Vec<bool>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dims = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dims];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; dims];
        for r in rows {
            for ((s, v), m) in std.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        std.iter_mut().for_each(|s| *s = s.sqrt());
        let mask = std.iter().zip(&mean).map(|(s, m)| *s > MIN_STD * m.abs().max(1.0)).collect();
        Self { mean, std, mask }
    }

    pub fn kept(&self) -> usize {
        self.mask.iter().filter(|k| **k).count()
    }

    /// Standardized values of the kept features.
    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .zip(&self.mask)
            .filter(|(_, keep)| **keep)
            .map(|(((v, m), s), _)| (v - m) / s)
            .collect()
    }

    /// Inverse of [`transform`](Self::transform); dropped features come back
    /// as their (constant) training mean.
    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        let mut it = z.iter();
        self.mean
            .iter()
            .zip(&self.std)
            .zip(&self.mask)
            .map(|((m, s), keep)| if *keep { m + s * it.next().expect("kept length") } else { *m })
            .collect()
    }
}

/// Binary logistic regression over standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub standardizer: Standardizer,
    /// One weight per kept feature.
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy plus `l2 / 2 * |w|^2` at `(w, b)`, and its
/// gradient written into `grad` (last slot is the bias). One pass, one `exp`
/// per row. `z` is row-major with `w.len()` columns.
fn loss_and_grad(z: &[f64], y: &[bool], w: &[f64], b: f64, l2: f64, grad: &mut [f64]) -> f64 {
    let dims = w.len();
    let n = y.len() as f64;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut ce = 0.0;
    for (row, &label) in z.chunks_exact(dims.max(1)).zip(y) {
        let row = &row[..dims];
        let logit = b + row.iter().zip(w).map(|(x, w)| x * w).sum::<f64>();
        let e = (-logit.abs()).exp();
        let p = if logit >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
        // log(1 + e^-s) with s the signed margin, stable for large |s|.
        let s = if label { logit } else { -logit };
        ce += if s > 0.0 { e.ln_1p() } else { -s + e.ln_1p() };
        let err = p - if label { 1.0 } else { 0.0 };
        for (g, x) in grad.iter_mut().zip(row) {
            *g += err * x;
        }
        grad[dims] += err;
    }
    for (g, wi) in grad.iter_mut().zip(w) {
        *g = *g / n + l2 * wi;
    }
    grad[dims] /= n;
    ce / n + 0.5 * l2 * w.iter().map(|w| w * w).sum::<f64>()
}

impl LogisticModel {
    /// Full-batch gradient descent from zero weights and prior log-odds bias. Returns the model and
    /// the loss before each epoch plus the final loss.
    pub fn fit(
        rows: &[Vec<f64>],
        labels: &[bool],
        hyper: &TrainHyper,
    ) -> Result<(Self, Vec<f64>), AuthError> {
        if rows.len() != labels.len() || rows.is_empty() {
            return Err(AuthError::InvalidInput(format!(
                "{} rows for {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let positives = labels.iter().filter(|l| **l).count();
        if positives == 0 || positives == labels.len() {
            return Err(AuthError::DegenerateLabels);
        }
        if !(hyper.lr > 0.0 && hyper.l2 >= 0.0) {
            return Err(AuthError::InvalidInput(format!("{hyper:?}")));
        }
        let standardizer = Standardizer::fit(rows);
        let dims = standardizer.kept();
        let z: Vec<f64> = rows.iter().flat_map(|r| standardizer.transform(r)).collect();
        let mut w = vec![0.0; dims];
        // Start at the prior log-odds so rare positives need not be learned
        // through the bias first.
        let prior = positives as f64 / labels.len() as f64;
        let mut b = (prior / (1.0 - prior)).ln();
        let mut history = Vec::with_capacity(hyper.epochs + 1);
        let mut grad = vec![0.0; dims + 1];
        for _ in 0..hyper.epochs {
            history.push(loss_and_grad(&z, labels, &w, b, hyper.l2, &mut grad));
            for (wi, g) in w.iter_mut().zip(&grad) {
                *wi -= hyper.lr * g;
            }
            b -= hyper.lr * grad[dims];
        }
        history.push(loss_and_grad(&z, labels, &w, b, hyper.l2, &mut grad));
        Ok((
            Self {
                standardizer,
                weights: w,
                bias: b,
            },
            history,
        ))
    }

    pub fn logit(&self, row: &[f64]) -> f64 {
        let z = self.standardizer.transform(row);
        self.bias + z.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>()
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.logit(row))
    }
}

/// Transmitting-versus-idle model for one ECU over [`FeatureVector`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmitClassifier {
    pub ecu: String,
    pub model: LogisticModel,
}

impl TransmitClassifier {
    pub fn fit(
        ecu: &str,
        data: &[(FeatureVector, bool)],
        hyper: &TrainHyper,
    ) -> Result<(Self, Vec<f64>), AuthError> {
        let rows: Vec<Vec<f64>> = data.iter().map(|(f, _)| f.0.to_vec()).collect();
        let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
        let (model, history) = LogisticModel::fit(&rows, &labels, hyper).map_err(|e| match e {
            AuthError::DegenerateLabels => AuthError::DegenerateLabelsFor(ecu.to_string()),
            other => other,
        })?;
        debug_assert_eq!(model.standardizer.mean.len(), FEATURE_COUNT);
        Ok((
            Self {
                ecu: ecu.to_string(),
                model,
            },
            history,
        ))
    }

    /// Probability that the ECU was transmitting during the window.
    pub fn p_transmit(&self, features: &FeatureVector) -> f64 {
        self.model.predict_proba(&features.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn accuracy(m: &LogisticModel, rows: &[Vec<f64>], labels: &[bool]) -> f64 {
        let hits = rows
            .iter()
            .zip(labels)
            .filter(|(r, &l)| (m.predict_proba(r) >= 0.5) == l)
            .count();
        hits as f64 / rows.len() as f64
    }

    fn blobs(n: usize, shift: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let l = i % 2 == 0;
            let c = if l { shift } else { -shift };
            rows.push(vec![c + noise.sample(&mut rng), 3.0 * noise.sample(&mut rng) + 10.0]);
            labels.push(l);
        }
        (rows, labels)
    }

    #[test]
    fn separable_toy_set_is_fit_exactly() {
        let rows = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.5],
            vec![0.5, 1.0],
            vec![3.0, 3.0],
            vec![4.0, 3.5],
            vec![3.5, 4.0],
        ];
        let labels = vec![false, false, false, true, true, true];
        let (m, history) = LogisticModel::fit(&rows, &labels, &TrainHyper::default()).unwrap();
        assert_eq!(accuracy(&m, &rows, &labels), 1.0);
        assert!(history.last().unwrap() < &history[0]);
    }

    #[test]
    fn loss_decreases_monotonically_with_default_lr() {
        let (rows, labels) = blobs(400, 1.0, 1);
        let (_, history) = LogisticModel::fit(&rows, &labels, &TrainHyper::default()).unwrap();
        for pair in history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-15, "{} -> {}", pair[0], pair[1]);
        }
    }

    #[test]
    fn shuffled_labels_give_chance_accuracy() {
        let (rows, mut labels) = blobs(2000, 2.0, 2);
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
        let (train_r, test_r) = rows.split_at(1000);
        let (train_l, test_l) = labels.split_at(1000);
        let (m, _) = LogisticModel::fit(train_r, train_l, &TrainHyper::default()).unwrap();
        let acc = accuracy(&m, test_r, test_l);
        assert!((0.4..=0.6).contains(&acc), "accuracy {acc}");
    }

    #[test]
    fn single_class_is_degenerate() {
        let rows = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            LogisticModel::fit(&rows, &[true, true], &TrainHyper::default()),
            Err(AuthError::DegenerateLabels)
        ));
    }

    #[test]
    fn constant_features_are_masked() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 5.0]).collect();
        let labels: Vec<bool> = (0..10).map(|i| i >= 5).collect();
        let (m, _) = LogisticModel::fit(&rows, &labels, &TrainHyper::default()).unwrap();
        assert_eq!(m.standardizer.mask, vec![true, false]);
        assert_eq!(m.weights.len(), 1);
    }

    #[test]
    fn standardization_is_idempotent_and_invertible() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| vec![rng.random_range(0.0..10.0), 7.0, rng.random_range(-3.0..3.0)])
            .collect();
        let s = Standardizer::fit(&rows);
        let z: Vec<Vec<f64>> = rows.iter().map(|r| s.transform(r)).collect();
        let s2 = Standardizer::fit(&z);
        for row in &z {
            for (a, b) in s2.transform(row).iter().zip(row) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        for (row, zr) in rows.iter().zip(&z) {
            for (a, b) in s.inverse(zr).iter().zip(row) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn probability_monotone_in_logit() {
        let mut last = 0.0;
        for i in -50..=50 {
            let p = sigmoid(i as f64);
            assert!((0.0..=1.0).contains(&p));
            assert!(p >= last);
            last = p;
        }
    }
}
