mod common;

use canlens::explain::{checked_predict, time_explain, Shape};
use canlens::reconstruct::{
    corpus_windows, fit_latent, reconstruct_variants, variation_score, LatentModel, ReconstructParams,
    VariantBundle,
};
use canlens::stats::argmax;
use common::{plateau_task, LATENT_WINDOW, T};
use proptest::prelude::*;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn model() -> LatentModel {
    plateau_task(0).model
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_residual_is_orthogonal(window in prop::collection::vec(-3.0f64..3.0, LATENT_WINDOW)) {
        let m = model();
        let residual: Vec<f64> = window.iter().zip(m.project(&window)).map(|(w, p)| w - p).collect();
        for u in &m.directions {
            prop_assert!(dot(&residual, u).abs() < 1e-6);
        }
        let z = m.encode(&window);
        prop_assert!(m.encode(&m.decode(&z)).iter().zip(&z).all(|(a, b)| (a - b).abs() < 1e-9));
    }
}

#[test]
fn directions_are_orthonormal_and_ordered() {
    let m = model();
    for (i, u) in m.directions.iter().enumerate() {
        for (j, v) in m.directions.iter().enumerate() {
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!((dot(u, v) - expected).abs() < 1e-6, "({i}, {j})");
        }
    }
    assert!(m.variances.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn reconstruction_error_falls_with_dimension() {
    let task = plateau_task(4);
    // Refit on a fresh corpus drawn the same way as the task's.
    let corpus: Vec<Vec<f64>> = (10..40).map(|s| plateau_task(s).input).collect();
    let windows = corpus_windows(&corpus, LATENT_WINDOW);
    let errors: Vec<f64> = (1..=8)
        .map(|d| {
            let m = fit_latent(&corpus, LATENT_WINDOW, d).unwrap();
            windows
                .iter()
                .map(|w| w.iter().zip(m.project(w)).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                .sum::<f64>()
        })
        .collect();
    assert!(errors.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "{errors:?}");
    assert_eq!(task.model.dims(), common::LATENT_DIMS);
}

#[test]
fn variants_only_touch_the_span_and_re_verify() {
    let task = plateau_task(6);
    let saliency = time_explain(&task.scorer, &task.input, 1, &task.time).unwrap();
    let params = ReconstructParams { seed: 6, ..Default::default() };
    let r = reconstruct_variants(&task.input, &saliency, &task.model, &task.scorer, &params).unwrap();
    let (a, b) = r.span;
    assert!(a < b && a >= r.margin && b + r.margin <= T);
    assert_eq!(r.variants.len(), params.k_variants);
    for v in &r.variants {
        for t in (0..a - r.margin).chain(b + r.margin..T) {
            assert_eq!(v.series[t].to_bits(), task.input[t].to_bits(), "t = {t}");
        }
        let probs = checked_predict(&task.scorer, &v.series, Shape::Series(T)).unwrap();
        assert_eq!(probs[r.original_class], v.confidence);
        if v.accepted {
            assert_eq!(argmax(&probs), Some(r.original_class));
            assert!(r.original_confidence - v.confidence <= params.delta);
        }
    }
    // The first variant sits at the context code.
    assert_eq!(r.variants[0].z, r.z_context);
    assert_eq!(r.variants[0].context_distance, 0.0);

    let again = reconstruct_variants(&task.input, &saliency, &task.model, &task.scorer, &params).unwrap();
    assert_eq!(again, r);

    let bundle = VariantBundle::new(task.input.clone(), r, &task.model.variances);
    let back = VariantBundle::from_json(&bundle.to_json()).unwrap();
    assert_eq!(back.reconstruction.span, bundle.reconstruction.span);
    assert_eq!(back.acceptance_rate, bundle.acceptance_rate);
    assert_eq!(back.variation_score, bundle.variation_score);
    assert!(bundle.variation_score.unwrap() > 0.0);
}

#[test]
fn zero_jitter_variants_coincide() {
    let task = plateau_task(2);
    let saliency = time_explain(&task.scorer, &task.input, 1, &task.time).unwrap();
    let params = ReconstructParams { sigma: 0.0, k_variants: 4, seed: 2, ..Default::default() };
    let r = reconstruct_variants(&task.input, &saliency, &task.model, &task.scorer, &params).unwrap();
    assert!(r.variants.iter().all(|v| v.series == r.variants[0].series));
    assert_eq!(variation_score(&r.variants, &task.model.variances).unwrap(), 0.0);
}
