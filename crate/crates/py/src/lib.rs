//! Python bindings: CAN frame coding, simulation, transmitter
//! authentication and the saliency explainers.

use std::collections::BTreeMap;
use std::fmt::Display;

use canlens::auth::{self, FrameObservation, TrainSettings};
use canlens::can::{crc15 as core_crc15, deserialize_frame, serialize_frame, stuff_bits, unstuff_bits, BitStream, CanFrame};
use canlens::explain::{
    deletion_insertion, optimize_mask, time_scores, Baseline, BlackBoxScorer, Fill, KeyedScorer, LevelScorer,
    MaskOptParams, SaliencyMap, Shape, TimeParams,
};
use canlens::power::{synthesize_network, PowerTrace};
use canlens::reconstruct::{fit_latent, reconstruct_variants, ReconstructParams};
use canlens::sim::{build_network, NetworkConfig, SimOutput};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// CRC-15 of a bit sequence.
#[pyfunction]
fn crc15(bits: Vec<bool>) -> PyResult<u16> {
    core_crc15(&BitStream::from(bits)).map_err(value_err)
}

/// Bit-stuffed wire bits of a data frame (SOF through CRC delimiter, ACK and EOF).
#[pyfunction]
fn encode_frame(id: u16, payload: Vec<u8>) -> PyResult<Vec<bool>> {
    let frame = CanFrame::new(id, payload, 0.0).map_err(value_err)?;
    Ok(serialize_frame(&frame).map_err(value_err)?.into_inner())
}

/// Inverse of `encode_frame`: `(id, payload)`, or ValueError on any stuffing,
/// form or CRC violation.
#[pyfunction]
fn decode_frame(bits: Vec<bool>) -> PyResult<(u16, Vec<u8>)> {
    let frame = deserialize_frame(&BitStream::from(bits)).map_err(value_err)?;
    Ok((frame.id(), frame.payload().to_vec()))
}

#[pyfunction]
fn stuff(bits: Vec<bool>) -> Vec<bool> {
    stuff_bits(&BitStream::from(bits)).into_inner()
}

#[pyfunction]
fn unstuff(bits: Vec<bool>) -> PyResult<Vec<bool>> {
    Ok(unstuff_bits(&BitStream::from(bits)).map_err(value_err)?.into_inner())
}

/// One simulated run: frame log, activity timeline and power traces.
#[pyclass]
struct Simulation {
    config: NetworkConfig,
    output: SimOutput,
    traces: BTreeMap<String, PowerTrace>,
}

#[pymethods]
impl Simulation {
    /// Simulate the network described by a TOML configuration.
    #[new]
    #[pyo3(signature = (config_toml, duration, seed=0))]
    fn new(config_toml: &str, duration: f64, seed: u64) -> PyResult<Self> {
        let config = NetworkConfig::from_toml(config_toml).map_err(value_err)?;
        let output = build_network(&config)
            .and_then(|n| n.run(duration, seed))
            .map_err(value_err)?;
        let traces = synthesize_network(&config, &output, duration, seed).map_err(value_err)?;
        Ok(Self { config, output, traces })
    }

    /// The bundled five-ECU reference configuration.
    #[staticmethod]
    fn reference_config() -> &'static str {
        canlens::sim::REFERENCE_CONFIG
    }

    /// `(t, id, payload, sender, spoofed)` for every frame on the bus.
    fn frames(&self) -> Vec<(f64, u16, Vec<u8>, String, bool)> {
        self.output
            .log
            .iter()
            .map(|r| (r.t(), r.frame.id(), r.frame.payload().to_vec(), r.sender.clone(), r.spoofed))
            .collect()
    }

    fn ecus(&self) -> Vec<String> {
        self.traces.keys().cloned().collect()
    }

    /// Power samples of one ECU.
    fn trace(&self, ecu: &str) -> PyResult<Vec<f64>> {
        self.traces
            .get(ecu)
            .map(|t| t.samples.clone())
            .ok_or_else(|| value_err(format!("no trace for {ecu}")))
    }

    fn sample_rate_hz(&self) -> f64 {
        self.config.power.sample_rate_hz
    }

    fn bus_utilization(&self) -> f64 {
        self.output.summary.bus_utilization
    }

    fn __len__(&self) -> usize {
        self.output.log.len()
    }
}

/// Per-ECU transmit classifiers plus the ownership map and alert threshold.
#[pyclass]
struct AuthModel {
    inner: auth::AuthModel,
}

#[pymethods]
impl AuthModel {
    /// Fit on the windows of `sim` that end by `t_to` seconds.
    #[staticmethod]
    #[pyo3(signature = (sim, t_to=f64::INFINITY, theta=0.5))]
    fn train(sim: &Simulation, t_to: f64, theta: f64) -> PyResult<Self> {
        let spans: BTreeMap<String, Vec<(f64, f64)>> = sim
            .output
            .timeline
            .ecus()
            .map(|e| (e.to_string(), sim.output.timeline.spans(e)))
            .collect();
        let settings = TrainSettings {
            theta,
            t_to,
            ..TrainSettings::default()
        };
        let inner = auth::train(&sim.traces, &spans, sim.config.ownership(), &settings).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: auth::AuthModel::from_json(text).map_err(value_err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta
    }

    /// One dict per frame starting at or after `t_from`: t, id, claimed,
    /// p_claimed, p_others, score, alert.
    #[pyo3(signature = (sim, t_from=0.0, theta=None))]
    fn authenticate<'py>(
        &self,
        py: Python<'py>,
        sim: &Simulation,
        t_from: f64,
        theta: Option<f64>,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let bitrate = sim.config.network.bitrate_bps;
        let obs: Vec<FrameObservation> = sim
            .output
            .log
            .iter()
            .filter(|r| r.t() >= t_from)
            .map(|r| FrameObservation::from_frame(&r.frame, bitrate))
            .collect();
        let verdicts = auth::authenticate_all(&obs, &sim.traces, &self.inner, theta.unwrap_or(self.inner.theta))
            .map_err(value_err)?;
        verdicts
            .iter()
            .map(|v| {
                let d = PyDict::new(py);
                d.set_item("t", v.t)?;
                d.set_item("id", v.id)?;
                d.set_item("claimed", &v.claimed)?;
                d.set_item("p_claimed", v.p_claimed)?;
                d.set_item("p_others", v.p_others)?;
                d.set_item("score", v.score)?;
                d.set_item("alert", v.is_alert())?;
                Ok(d)
            })
            .collect()
    }
}

enum Inner {
    Keyed(KeyedScorer),
    Level(LevelScorer),
}

/// Analytic two-class scorer over a series, for the explainers.
#[pyclass]
struct Scorer {
    inner: Inner,
}

impl BlackBoxScorer for Scorer {
    fn num_classes(&self) -> usize {
        2
    }

    fn predict(&self, input: &[f64], shape: Shape) -> Vec<f64> {
        match &self.inner {
            Inner::Keyed(s) => s.predict(input, shape),
            Inner::Level(s) => s.predict(input, shape),
        }
    }
}

fn check_region(start: usize, end: usize, len: Option<usize>) -> PyResult<()> {
    if start >= end || len.is_some_and(|n| end > n) {
        return Err(value_err(format!("bad region {start}..{end}")));
    }
    Ok(())
}

#[pymethods]
impl Scorer {
    /// Class 1 when `[start, end)` still matches `reference`.
    #[staticmethod]
    fn keyed(reference: Vec<f64>, start: usize, end: usize) -> PyResult<Self> {
        check_region(start, end, Some(reference.len()))?;
        Ok(Self {
            inner: Inner::Keyed(KeyedScorer::with_mean_baseline(reference, start..end)),
        })
    }

    /// Class 1 when the mean of `[start, end)` exceeds `threshold`.
    #[staticmethod]
    #[pyo3(signature = (start, end, threshold=0.5, gain=10.0))]
    fn level(start: usize, end: usize, threshold: f64, gain: f64) -> PyResult<Self> {
        check_region(start, end, None)?;
        Ok(Self {
            inner: Inner::Level(LevelScorer {
                region: start..end,
                threshold,
                gain,
            }),
        })
    }

    fn predict(&self, series: Vec<f64>) -> Vec<f64> {
        BlackBoxScorer::predict(self, &series, Shape::Series(series.len()))
    }
}

fn time_params(len: usize, k: usize, fill_mean: bool, seed: u64) -> TimeParams {
    TimeParams {
        k,
        fill: if fill_mean { Fill::Mean } else { Fill::Interpolate },
        seed,
        ..TimeParams::for_length(len)
    }
}

/// Sub-sampling saliency for `class`, normalized to [0, 1].
#[pyfunction]
#[pyo3(signature = (scorer, series, class_=1, k=1000, fill_mean=false, seed=0))]
fn explain_time(
    scorer: &Scorer,
    series: Vec<f64>,
    class_: usize,
    k: usize,
    fill_mean: bool,
    seed: u64,
) -> PyResult<Vec<f64>> {
    let scores = time_scores(scorer, &series, &time_params(series.len(), k, fill_mean, seed)).map_err(value_err)?;
    Ok(scores.saliency(class_).scores)
}

/// Signed map: positive where a point supports `class_pos` over `class_neg`.
#[pyfunction]
#[pyo3(signature = (scorer, series, class_pos=1, class_neg=0, k=1000, seed=0))]
fn explain_contrastive(
    scorer: &Scorer,
    series: Vec<f64>,
    class_pos: usize,
    class_neg: usize,
    k: usize,
    seed: u64,
) -> PyResult<Vec<f64>> {
    let scores = time_scores(scorer, &series, &time_params(series.len(), k, false, seed)).map_err(value_err)?;
    Ok(scores.contrast(class_pos, class_neg).scores)
}

/// Optimized-mask saliency: `(map, evaluations)`.
#[pyfunction]
#[pyo3(signature = (scorer, series, class_=1, lambda_=0.01, seed=0))]
fn explain_mask(scorer: &Scorer, series: Vec<f64>, class_: usize, lambda_: f64, seed: u64) -> PyResult<(Vec<f64>, usize)> {
    let params = MaskOptParams {
        lambda: lambda_,
        seed,
        ..MaskOptParams::default()
    };
    let r = optimize_mask(scorer, &series, Shape::Series(series.len()), class_, &params).map_err(value_err)?;
    Ok((r.saliency.scores, r.eval_count))
}

/// `(deletion_auc, insertion_auc)` of a saliency map.
#[pyfunction]
#[pyo3(signature = (scorer, series, saliency, class_=1, steps=33))]
fn fidelity(scorer: &Scorer, series: Vec<f64>, saliency: Vec<f64>, class_: usize, steps: usize) -> PyResult<(f64, f64)> {
    if saliency.len() != series.len() {
        return Err(value_err("saliency and series lengths differ"));
    }
    let map = SaliencyMap::normalized(Shape::Series(series.len()), &saliency);
    let f = deletion_insertion(scorer, &series, &map, class_, steps, &Baseline::InputMean).map_err(value_err)?;
    Ok((f.deletion_auc, f.insertion_auc))
}

/// Class-preserving variants of the salient region. Returns a dict with
/// span, acceptance_rate and the accepted variant series.
#[pyfunction]
#[pyo3(signature = (scorer, series, saliency, corpus, latent_window, latent_dims, k_variants=32, sigma=0.5, tau=0.5, delta=0.1, seed=0))]
#[allow(clippy::too_many_arguments)]
fn reconstruct<'py>(
    py: Python<'py>,
    scorer: &Scorer,
    series: Vec<f64>,
    saliency: Vec<f64>,
    corpus: Vec<Vec<f64>>,
    latent_window: usize,
    latent_dims: usize,
    k_variants: usize,
    sigma: f64,
    tau: f64,
    delta: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    if saliency.len() != series.len() {
        return Err(value_err("saliency and series lengths differ"));
    }
    let model = fit_latent(&corpus, latent_window, latent_dims).map_err(value_err)?;
    let map = SaliencyMap::normalized(Shape::Series(series.len()), &saliency);
    let params = ReconstructParams {
        k_variants,
        sigma,
        tau,
        delta,
        seed,
    };
    let r = reconstruct_variants(&series, &map, &model, scorer, &params).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("span", r.span)?;
    d.set_item("acceptance_rate", r.acceptance_rate())?;
    d.set_item("original_class", r.original_class)?;
    d.set_item("variants", r.accepted().map(|v| v.series.clone()).collect::<Vec<_>>())?;
    Ok(d)
}

#[pymodule]
fn pycanlens(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", canlens::VERSION)?;
    m.add_function(wrap_pyfunction!(crc15, m)?)?;
    m.add_function(wrap_pyfunction!(encode_frame, m)?)?;
    m.add_function(wrap_pyfunction!(decode_frame, m)?)?;
    m.add_function(wrap_pyfunction!(stuff, m)?)?;
    m.add_function(wrap_pyfunction!(unstuff, m)?)?;
    m.add_function(wrap_pyfunction!(explain_time, m)?)?;
    m.add_function(wrap_pyfunction!(explain_contrastive, m)?)?;
    m.add_function(wrap_pyfunction!(explain_mask, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_class::<Simulation>()?;
    m.add_class::<AuthModel>()?;
    m.add_class::<Scorer>()?;
    Ok(())
}
