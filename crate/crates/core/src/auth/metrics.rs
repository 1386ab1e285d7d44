use serde::{Deserialize, Serialize};

use super::{AuthError, AuthVerdict};

/// Binary metrics with "alert" as the positive prediction and "spoofed" as
/// the positive truth. Ratios with an empty denominator are reported as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub fpr: f64,
    pub fnr: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self {
            tp,
            fp,
            tn,
            fn_,
            accuracy: ratio(tp + tn, tp + fp + tn + fn_),
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            fpr: ratio(fp, fp + tn),
            fnr: ratio(fn_, fn_ + tp),
        }
    }
}

pub fn evaluate(verdicts: &[AuthVerdict], spoofed: &[bool]) -> Result<Metrics, AuthError> {
    if verdicts.is_empty() {
        return Err(AuthError::NoVerdicts);
    }
    if verdicts.len() != spoofed.len() {
        return Err(AuthError::LengthMismatch {
            verdicts: verdicts.len(),
            truth: spoofed.len(),
        });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (v, &truth) in verdicts.iter().zip(spoofed) {
        match (v.is_alert(), truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, tn, fn_))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub theta: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Operating points for each threshold (alert iff score < theta).
pub fn roc_sweep(scores: &[f64], spoofed: &[bool], thetas: &[f64]) -> Vec<RocPoint> {
    let pos = spoofed.iter().filter(|s| **s).count() as u64;
    let neg = spoofed.len() as u64 - pos;
    thetas
        .iter()
        .map(|&theta| {
            let (mut tp, mut fp) = (0u64, 0u64);
            for (&s, &truth) in scores.iter().zip(spoofed) {
                if s < theta {
                    if truth {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            RocPoint {
                theta,
                fpr: ratio(fp, neg),
                tpr: ratio(tp, pos),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::Decision;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn verdict(alert: bool, score: f64) -> AuthVerdict {
        AuthVerdict {
            t: 0.0,
            id: 1,
            claimed: "A".into(),
            p_claimed: 0.0,
            p_others: 0.0,
            score,
            decision: if alert { Decision::Alert } else { Decision::Authentic },
        }
    }

    #[test]
    fn all_correct() {
        let truth = [true, false, false, true];
        let vs: Vec<_> = truth.iter().map(|&t| verdict(t, 0.0)).collect();
        let m = evaluate(&vs, &truth).unwrap();
        assert_eq!(m.fpr, 0.0);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn all_alert_on_clean_traffic() {
        let vs = vec![verdict(true, 0.0); 5];
        let m = evaluate(&vs, &[false; 5]).unwrap();
        assert_eq!(m.fpr, 1.0);
        assert_eq!(m.fp, 5);
    }

    #[test]
    fn errors() {
        assert!(matches!(evaluate(&[], &[]), Err(AuthError::NoVerdicts)));
        assert!(matches!(
            evaluate(&[verdict(true, 0.0)], &[true, false]),
            Err(AuthError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn counts_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let truth: Vec<bool> = (0..1000).map(|_| rng.random_bool(0.2)).collect();
        let vs: Vec<_> = (0..1000).map(|_| verdict(rng.random_bool(0.3), 0.0)).collect();
        let m = evaluate(&vs, &truth).unwrap();
        let mut counts = [[0u64; 2]; 2];
        for i in 0..1000 {
            counts[vs[i].is_alert() as usize][truth[i] as usize] += 1;
        }
        assert_eq!((m.tp, m.fp, m.tn, m.fn_), (counts[1][1], counts[1][0], counts[0][0], counts[0][1]));
        assert_eq!(m.tp + m.fp + m.tn + m.fn_, 1000);
    }

    #[test]
    fn roc_fpr_non_increasing_as_theta_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth: Vec<bool> = (0..500).map(|_| rng.random_bool(0.1)).collect();
        let scores: Vec<f64> = truth
            .iter()
            .map(|&t| if t { -0.5 } else { 0.6 } + rng.random_range(-0.8..0.8))
            .collect();
        let thetas: Vec<f64> = (0..=40).map(|i| 1.0 - i as f64 * 0.05).collect();
        let roc = roc_sweep(&scores, &truth, &thetas);
        for pair in roc.windows(2) {
            assert!(pair[1].fpr <= pair[0].fpr);
            assert!(pair[1].tpr <= pair[0].tpr);
        }
    }
}
