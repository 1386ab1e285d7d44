//! Synthetic tasks shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use canlens::auth::{self, AuthModel, FrameObservation, TrainSettings};
use canlens::explain::{Fill, KeyedScorer, LevelScorer, TimeParams};
use canlens::power::{synthesize_network, PowerTrace};
use canlens::reconstruct::{fit_latent, LatentModel};
use canlens::sim::{build_network, AttackConfig, AttackKind, NetworkConfig, SimOutput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const T: usize = 128;
pub const KEY: std::ops::Range<usize> = 40..60;

/// Random +/-1 series; its mean is the replacement value, so every element
/// is far from the baseline.
pub fn sign_series(seed: u64, t: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    (0..t).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// Scorer whose class-1 confidence is the kept fraction of [40, 60).
pub fn keyed_task(seed: u64) -> (Vec<f64>, KeyedScorer) {
    let x = sign_series(seed, T);
    let s = KeyedScorer::with_mean_baseline(x.clone(), KEY);
    (x, s)
}

pub fn in_key(i: usize) -> bool {
    KEY.contains(&i)
}

pub fn mean_in_out(scores: &[f64]) -> (f64, f64) {
    let inside: f64 = scores[KEY].iter().sum::<f64>() / KEY.len() as f64;
    let outside: f64 = scores[..KEY.start].iter().chain(&scores[KEY.end..]).sum::<f64>()
        / (scores.len() - KEY.len()) as f64;
    (inside, outside)
}

fn plateau(rng: &mut ChaCha8Rng, start: usize, end: usize, level: f64) -> Vec<f64> {
    let noise = Normal::new(0.0, 0.1).unwrap();
    (0..T)
        .map(|t| if (start..end).contains(&t) { level } else { 0.0 } + noise.sample(rng))
        .collect()
}

/// Reconstruction task: a level plateau over [16, 88) scored by the mean
/// level of [40, 60), a latent model fitted on plateaus of random extent and
/// level, and TiME with mean fill to find the region.
pub struct PlateauTask {
    pub input: Vec<f64>,
    pub scorer: LevelScorer,
    pub model: LatentModel,
    pub time: TimeParams,
}

pub const LATENT_WINDOW: usize = 16;
pub const LATENT_DIMS: usize = 4;

pub fn plateau_task(seed: u64) -> PlateauTask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corpus: Vec<Vec<f64>> = (0..40)
        .map(|_| {
            let s = rng.random_range(0..48);
            let len = rng.random_range(24..80);
            let level = rng.random_range(0.6..1.4);
            plateau(&mut rng, s, (s + len).min(T), level)
        })
        .collect();
    let model = fit_latent(&corpus, LATENT_WINDOW, LATENT_DIMS).unwrap();
    let input = plateau(&mut rng, 16, 88, 1.0);
    PlateauTask {
        input,
        scorer: LevelScorer {
            region: KEY,
            threshold: 0.5,
            gain: 10.0,
        },
        model,
        time: TimeParams {
            fill: Fill::Mean,
            seed,
            ..TimeParams::for_length(T)
        },
    }
}

/// Reference network plus one extra attack, simulated and synthesized.
pub struct Scenario {
    pub config: NetworkConfig,
    pub output: SimOutput,
    pub traces: BTreeMap<String, PowerTrace>,
    pub duration: f64,
}

pub const ATTACK_START: f64 = 5.0;

pub fn reference_with(attack: Option<AttackConfig>, duration: f64, seed: u64) -> Scenario {
    let mut config = NetworkConfig::reference();
    config.attack.extend(attack);
    let output = build_network(&config).unwrap().run(duration, seed).unwrap();
    let traces = synthesize_network(&config, &output, duration, seed).unwrap();
    Scenario {
        config,
        output,
        traces,
        duration,
    }
}

pub fn impersonation(attacker: &str, victim_id: u16, rate_hz: f64) -> AttackConfig {
    AttackConfig {
        kind: AttackKind::Impersonation,
        attacker: attacker.into(),
        victim_id,
        start_s: ATTACK_START,
        rate_hz,
        stop_s: None,
    }
}

pub fn added_device(name: &str, victim_id: u16, rate_hz: f64) -> AttackConfig {
    AttackConfig {
        kind: AttackKind::AddedDevice,
        attacker: name.into(),
        victim_id,
        start_s: ATTACK_START,
        rate_hz,
        stop_s: None,
    }
}

impl Scenario {
    pub fn spans(&self) -> BTreeMap<String, Vec<(f64, f64)>> {
        self.output
            .timeline
            .ecus()
            .map(|e| (e.to_string(), self.output.timeline.spans(e)))
            .collect()
    }

    /// Classifiers trained on the attack-free prefix.
    pub fn train(&self) -> AuthModel {
        let settings = TrainSettings {
            t_to: ATTACK_START,
            ..TrainSettings::default()
        };
        auth::train(&self.traces, &self.spans(), self.config.ownership(), &settings).unwrap()
    }

    /// Observations and spoofed flags of frames that start after the
    /// training prefix.
    pub fn held_out(&self) -> (Vec<FrameObservation>, Vec<bool>) {
        let bitrate = self.config.network.bitrate_bps;
        self.output
            .log
            .iter()
            .filter(|r| r.t() >= ATTACK_START)
            .map(|r| (FrameObservation::from_frame(&r.frame, bitrate), r.spoofed))
            .unzip()
    }
}
