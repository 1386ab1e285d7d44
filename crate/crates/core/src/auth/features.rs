use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::AuthError;

pub const FEATURE_COUNT: usize = 9;
pub const MIN_WINDOW_SAMPLES: usize = 8;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "mean",
    "std",
    "rms",
    "peak_to_peak",
    "skewness",
    "kurtosis",
    "band_energy_low",
    "band_energy_mid",
    "band_energy_high",
];

/// Summary statistics of one power window, in [`FEATURE_NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn mean(&self) -> f64 {
        self.0[0]
    }
    pub fn std(&self) -> f64 {
        self.0[1]
    }
    pub fn rms(&self) -> f64 {
        self.0[2]
    }
    pub fn peak_to_peak(&self) -> f64 {
        self.0[3]
    }
    pub fn skewness(&self) -> f64 {
        self.0[4]
    }
    /// Excess kurtosis.
    pub fn kurtosis(&self) -> f64 {
        self.0[5]
    }
    /// Energies of the low, mid and high thirds of the positive spectrum.
    pub fn band_energies(&self) -> [f64; 3] {
        [self.0[6], self.0[7], self.0[8]]
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Computes the nine window features.
///
/// Moments use the unbiased estimators: sample standard deviation, adjusted
/// Fisher-Pearson skewness and bias-corrected excess kurtosis. A window with
/// zero variance has skewness and kurtosis 0. Band energies are sums of
/// `|X_k|^2 / n` over bins `1..=n/2` of a direct DFT, split into thirds.
pub fn extract_features(window: &[f64]) -> Result<FeatureVector, AuthError> {
    let n = window.len();
    if n < MIN_WINDOW_SAMPLES {
        return Err(AuthError::InsufficientSamples(n));
    }
    if window.iter().any(|x| !x.is_finite()) {
        return Err(AuthError::InvalidInput("non-finite sample".into()));
    }
    let nf = n as f64;
    let mean = window.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4, mut sq) = (0.0, 0.0, 0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &x in window {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
        sq += x * x;
        lo = lo.min(x);
        hi = hi.max(x);
    }
    let std = (m2 / (nf - 1.0)).sqrt();
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
    // Relative to the scale of the data, a variance this small is rounding.
    let (skew, kurt) = if m2 <= 1e-24 * (mean * mean).max(1.0) {
        (0.0, 0.0)
    } else {
        let g1 = m3 / m2.powf(1.5);
        let g2 = m4 / (m2 * m2) - 3.0;
        let skew = (nf * (nf - 1.0)).sqrt() / (nf - 2.0) * g1;
        let kurt = ((nf + 1.0) * g2 + 6.0) * (nf - 1.0) / ((nf - 2.0) * (nf - 3.0));
        (skew, kurt)
    };
    let bands = band_energies(window);
    Ok(FeatureVector([
        mean,
        std,
        (sq / nf).sqrt(),
        hi - lo,
        skew,
        kurt,
        bands[0],
        bands[1],
        bands[2],
    ]))
}

fn band_energies(x: &[f64]) -> [f64; 3] {
    let n = x.len();
    let half = n / 2;
    let (cos, sin): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|j| {
            let a = 2.0 * PI * j as f64 / n as f64;
            (a.cos(), a.sin())
        })
        .unzip();
    let mut out = [0.0; 3];
    for k in 1..=half {
        let (mut re, mut im) = (0.0, 0.0);
        for (t, &v) in x.iter().enumerate() {
            let j = (k * t) % n;
            re += v * cos[j];
            im -= v * sin[j];
        }
        // Bins 1..=half split as evenly as integer division allows.
        let band = ((k - 1) * 3 / half).min(2);
        out[band] += (re * re + im * im) / n as f64;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Two-pass textbook estimators, written independently of the
    /// single-pass accumulation above.
    fn naive_moments(x: &[f64]) -> [f64; 6] {
        let n = x.len() as f64;
        let mean: f64 = x.iter().sum::<f64>() / n;
        let dev: Vec<f64> = x.iter().map(|v| v - mean).collect();
        let s2: f64 = dev.iter().map(|d| d.powi(2)).sum::<f64>() / (n - 1.0);
        let b2: f64 = dev.iter().map(|d| d.powi(2)).sum::<f64>() / n;
        let b3: f64 = dev.iter().map(|d| d.powi(3)).sum::<f64>() / n;
        let b4: f64 = dev.iter().map(|d| d.powi(4)).sum::<f64>() / n;
        let skew = b3 / b2.powf(1.5) * (n * (n - 1.0)).sqrt() / (n - 2.0);
        let kurt = (n - 1.0) / ((n - 2.0) * (n - 3.0)) * ((n + 1.0) * (b4 / (b2 * b2) - 3.0) + 6.0);
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        let max = x.iter().cloned().fold(f64::MIN, f64::max);
        let min = x.iter().cloned().fold(f64::MAX, f64::min);
        [mean, s2.sqrt(), rms, max - min, skew, kurt]
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
    }

    #[test]
    fn too_short_window() {
        assert!(matches!(
            extract_features(&[1.0; 7]),
            Err(AuthError::InsufficientSamples(7))
        ));
    }

    #[test]
    fn constant_window_conventions() {
        let f = extract_features(&[512.5; 32]).unwrap();
        assert_eq!(f.mean(), 512.5);
        assert_eq!(f.std(), 0.0);
        assert_eq!(f.peak_to_peak(), 0.0);
        assert_eq!(f.skewness(), 0.0);
        assert_eq!(f.kurtosis(), 0.0);
        assert!(f.band_energies().iter().all(|e| e.abs() < 1e-9));
    }

    #[test]
    fn low_frequency_sinusoid_lands_in_low_band() {
        let n = 60;
        let x: Vec<f64> = (0..n)
            .map(|t| 500.0 + 10.0 * (2.0 * PI * 3.0 * t as f64 / n as f64).sin())
            .collect();
        let [low, mid, high] = extract_features(&x).unwrap().band_energies();
        assert!(low > 1e3 * (mid + high), "{low} {mid} {high}");
        // Parseval: the tone's energy is split between bins k and n - k.
        assert!(rel_close(low, 0.5 * (10.0f64.powi(2) / 2.0) * n as f64, 1e-9));
    }

    #[test]
    fn high_frequency_sinusoid_lands_in_high_band() {
        let n = 60;
        let x: Vec<f64> = (0..n)
            .map(|t| (2.0 * PI * 27.0 * t as f64 / n as f64).cos())
            .collect();
        let [low, mid, high] = extract_features(&x).unwrap().band_energies();
        assert!(high > 1e3 * (low + mid));
    }

    #[test]
    fn moments_match_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [8, 9, 30, 257] {
            let x: Vec<f64> = (0..n).map(|_| 500.0 + rng.random_range(-20.0..35.0)).collect();
            let f = extract_features(&x).unwrap();
            let want = naive_moments(&x);
            for (i, (&got, &exp)) in f.0[..6].iter().zip(&want).enumerate() {
                assert!(rel_close(got, exp, 1e-9), "n={n} feature {i}: {got} vs {exp}");
            }
        }
    }
}
