use std::collections::{BTreeMap, HashMap};
use std::fs;

use canlens::auth::{
    authenticate_all, evaluate, read_verdicts, roc_sweep, train, write_verdicts, AuthModel, FrameObservation, Metrics,
    RocPoint, TrainHyper, TrainSettings,
};
use canlens::can::log::format_time;
use canlens::can::write_frame_log;
use canlens::explain::SaliencySummary;
use canlens::power::{label_windows, synthesize_network, write_labels, write_trace};
use canlens::sim::{build_network, write_timeline, NetworkConfig};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::args::{AuthenticateArgs, EvaluateArgs, SimulateArgs, TrainArgs};
use crate::data::{create, open, write_json, write_text, SimDir};
use crate::error::CliError;

pub fn simulate(args: &SimulateArgs, seed: u64) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.config).map_err(CliError::io(&args.config))?;
    let config = NetworkConfig::from_toml(&text)?;
    let output = build_network(&config)?.run(args.duration, seed)?;
    let traces = synthesize_network(&config, &output, args.duration, seed)?;

    let dir = SimDir::new(&args.out);
    write_text(&dir.config(), &text)?;
    write_json(&dir.summary(), &output.summary)?;
    write_frame_log(create(&dir.frames())?, &output.log)?;
    write_timeline(create(&dir.timeline())?, &output.timeline.records())?;
    for (ecu, trace) in &traces {
        write_trace(create(&dir.traces().join(format!("{ecu}.txt")))?, trace)?;
        let windows = label_windows(trace, &output.timeline.spans(ecu), args.window_s, args.overlap)?;
        write_labels(create(&dir.labels().join(format!("{ecu}.csv")))?, &windows)?;
    }
    eprintln!(
        "simulated {} s: {} frames ({} spoofed), {} traces, bus load {:.3}",
        args.duration,
        output.log.len(),
        output.summary.spoofed_transmitted,
        traces.len(),
        output.summary.bus_utilization
    );
    Ok(())
}

pub fn train_model(args: &TrainArgs) -> Result<(), CliError> {
    let dir = SimDir::new(&args.data);
    let (config, _) = dir.read_config()?;
    let settings = TrainSettings {
        window_s: args.window_s,
        overlap_threshold: args.overlap,
        theta: args.theta,
        hyper: TrainHyper {
            lr: args.lr,
            epochs: args.epochs,
            l2: args.l2,
        },
        t_from: args.t_from,
        t_to: args.t_to.unwrap_or(f64::INFINITY),
    };
    let model = train(&dir.read_traces()?, &dir.read_spans()?, config.ownership(), &settings)?;
    write_text(&args.out, &model.to_json())?;
    eprintln!("trained {} classifiers", model.classifiers.len());
    Ok(())
}

fn read_model(path: &std::path::Path) -> Result<AuthModel, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    Ok(AuthModel::from_json(&text)?)
}

pub fn authenticate(args: &AuthenticateArgs) -> Result<(), CliError> {
    let dir = SimDir::new(&args.data);
    let (config, _) = dir.read_config()?;
    let model = read_model(&args.model)?;
    let bitrate = config.network.bitrate_bps;
    let observations: Vec<FrameObservation> = dir
        .read_log()?
        .iter()
        .filter(|r| r.t() >= args.t_from)
        .map(|r| FrameObservation::from_frame(&r.frame, bitrate))
        .collect();
    let theta = args.theta.unwrap_or(model.theta);
    let verdicts = authenticate_all(&observations, &dir.read_traces()?, &model, theta)?;
    write_verdicts(create(&args.out)?, &verdicts)?;
    let alerts = verdicts.iter().filter(|v| v.is_alert()).count();
    eprintln!("{} frames, {alerts} alerts at theta {theta}", verdicts.len());
    Ok(())
}

/// Deterministic summary of one scenario run. Timing lives in a separate file.
#[derive(Debug, Serialize)]
pub struct RunReport {
    /// SHA-256 prefix of the configuration text.
    pub scenario_id: String,
    pub seed: u64,
    pub duration_s: f64,
    pub versions: BTreeMap<&'static str, &'static str>,
    pub frames: usize,
    pub spoofed: usize,
    pub metrics: Metrics,
    pub roc: Vec<RocPoint>,
    pub explanations: Vec<SaliencySummary>,
}

pub fn scenario_id(config_text: &str) -> String {
    let digest = Sha256::digest(config_text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn evaluate_run(args: &EvaluateArgs) -> Result<(), CliError> {
    let dir = SimDir::new(&args.data);
    let (_, config_text) = dir.read_config()?;
    let (seed, duration_s) = dir.read_run()?;
    let truth_by_frame: HashMap<(String, u16), bool> = dir
        .read_log()?
        .iter()
        .map(|r| ((format_time(r.t()), r.frame.id()), r.spoofed))
        .collect();
    let verdicts = read_verdicts(open(&args.verdicts)?)?;
    let truth: Vec<bool> = verdicts
        .iter()
        .map(|v| {
            truth_by_frame.get(&(format_time(v.t), v.id)).copied().ok_or_else(|| {
                CliError::Input(format!("verdict for id {:#05x} at {} s is not in the frame log", v.id, format_time(v.t)))
            })
        })
        .collect::<Result<_, _>>()?;
    let metrics = evaluate(&verdicts, &truth)?;
    let scores: Vec<f64> = verdicts.iter().map(|v| v.score).collect();
    let thetas: Vec<f64> = (0..=40).map(|i| -1.0 + 0.05 * i as f64).collect();
    let explanations = args
        .explanations
        .iter()
        .map(|p| Ok(serde_json::from_reader(open(p)?)?))
        .collect::<Result<Vec<SaliencySummary>, CliError>>()?;
    let report = RunReport {
        scenario_id: scenario_id(&config_text),
        seed,
        duration_s,
        versions: BTreeMap::from([("canlens", canlens::VERSION), ("canlens-cli", env!("CARGO_PKG_VERSION"))]),
        frames: verdicts.len(),
        spoofed: truth.iter().filter(|t| **t).count(),
        roc: roc_sweep(&scores, &truth, &thetas),
        metrics,
        explanations,
    };
    write_json(&args.out, &report)?;
    eprintln!(
        "FPR {:.4}, recall {:.4}, precision {:.4} over {} frames",
        report.metrics.fpr, report.metrics.recall, report.metrics.precision, report.frames
    );
    Ok(())
}
