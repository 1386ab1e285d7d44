use std::fs;
use std::path::Path;

use canlens::auth::{extract_features, frame_window_range, AuthModel, FrameObservation, TransmitClassifier};
use canlens::explain::{
    deletion_insertion, optimize_mask, time_scores, write_saliency, Baseline, BlackBoxScorer, Fill, KeyedScorer,
    LevelScorer, MaskOptParams, SaliencyFile, SaliencyMap, SaliencySummary, Shape, TimeParams,
};
use canlens::reconstruct::{fit_latent, reconstruct_variants, ReconstructParams, VariantBundle};
use serde::Serialize;

use crate::args::{ExplainArgs, FillArg, Method, TargetArgs};
use crate::data::{create, write_json, SimDir};
use crate::error::CliError;

/// Largest number of frame windows used as a reconstruction corpus.
const CORPUS_FRAMES: usize = 200;

enum TargetScorer {
    Keyed(KeyedScorer),
    Level(LevelScorer),
    /// `[idle, transmitting]` from one ECU's window classifier.
    Transmit(TransmitClassifier),
}

impl BlackBoxScorer for TargetScorer {
    fn num_classes(&self) -> usize {
        match self {
            TargetScorer::Keyed(s) => s.num_classes(),
            TargetScorer::Level(s) => s.num_classes(),
            TargetScorer::Transmit(_) => 2,
        }
    }

    fn predict(&self, input: &[f64], shape: Shape) -> Vec<f64> {
        match self {
            TargetScorer::Keyed(s) => s.predict(input, shape),
            TargetScorer::Level(s) => s.predict(input, shape),
            TargetScorer::Transmit(clf) => {
                // Window length is checked when the target is loaded and
                // explainers only pass finite values of that length.
                let p = extract_features(input).map_or(0.5, |f| clf.p_transmit(&f));
                vec![1.0 - p, p]
            }
        }
    }
}

struct Target {
    series: Vec<f64>,
    /// Time (s) or index of each element, for the plot file.
    times: Vec<f64>,
    scorer: TargetScorer,
    corpus: Option<Vec<Vec<f64>>>,
}

fn parse_scorer(spec: &str, series: &[f64]) -> Result<TargetScorer, CliError> {
    let bad = || CliError::Input(format!("bad scorer spec {spec:?}; expected keyed:START:END or level:START:END:THRESHOLD:GAIN"));
    let parts: Vec<&str> = spec.split(':').collect();
    let index = |s: &str| s.parse::<usize>().map_err(|_| bad());
    let real = |s: &str| s.parse::<f64>().map_err(|_| bad());
    let region = |a: &str, b: &str| -> Result<std::ops::Range<usize>, CliError> {
        let (a, b) = (index(a)?, index(b)?);
        if a < b && b <= series.len() {
            Ok(a..b)
        } else {
            Err(CliError::Input(format!("scorer region {a}..{b} outside series of length {}", series.len())))
        }
    };
    match parts.as_slice() {
        ["keyed", a, b] => Ok(TargetScorer::Keyed(KeyedScorer::with_mean_baseline(series.to_vec(), region(a, b)?))),
        ["level", a, b, threshold, gain] => Ok(TargetScorer::Level(LevelScorer {
            region: region(a, b)?,
            threshold: real(threshold)?,
            gain: real(gain)?,
        })),
        _ => Err(bad()),
    }
}

fn read_series(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.parse::<f64>().map_err(|_| CliError::Input(format!("{}: bad value {l:?}", path.display()))))
        .collect()
}

fn read_corpus(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| CliError::Input(format!("{}: bad corpus row", path.display())))
        })
        .collect()
}

fn load_target(args: &TargetArgs) -> Result<Target, CliError> {
    if let Some(path) = &args.series {
        let series = read_series(path)?;
        let spec = args.scorer.as_deref().ok_or_else(|| CliError::Input("--series needs --scorer".into()))?;
        let scorer = parse_scorer(spec, &series)?;
        let times = (0..series.len()).map(|i| i as f64).collect();
        return Ok(Target {
            series,
            times,
            scorer,
            corpus: None,
        });
    }
    let (Some(data), Some(model_path), Some(frame)) = (&args.data, &args.model, args.frame) else {
        return Err(CliError::Input("give --series with --scorer, or --data, --model and --frame".into()));
    };
    let dir = SimDir::new(data);
    let (config, _) = dir.read_config()?;
    let bitrate = config.network.bitrate_bps;
    let log = dir.read_log()?;
    let record = log
        .get(frame)
        .ok_or_else(|| CliError::Input(format!("frame {frame} outside a log of {} frames", log.len())))?;
    let text = fs::read_to_string(model_path).map_err(CliError::io(model_path))?;
    let model = AuthModel::from_json(&text)?;
    let ecu = match &args.ecu {
        Some(e) => e.clone(),
        None => model
            .ownership
            .get(&record.frame.id())
            .cloned()
            .ok_or_else(|| CliError::Input(format!("id {:#05x} has no owner; pass --ecu", record.frame.id())))?,
    };
    let classifier = model
        .classifiers
        .get(&ecu)
        .cloned()
        .ok_or_else(|| CliError::Input(format!("model has no classifier for {ecu}")))?;
    let mut traces = dir.read_traces()?;
    let trace = traces
        .remove(&ecu)
        .ok_or_else(|| CliError::Input(format!("no trace for {ecu}")))?;
    let window = |r: &canlens::can::FrameRecord| {
        frame_window_range(&trace, &FrameObservation::from_frame(&r.frame, bitrate), model.window_s)
    };
    let range = window(record)?;
    let series = trace.samples[range.clone()].to_vec();
    extract_features(&series)?;
    let times = range.map(|i| trace.time_of(i)).collect();
    let corpus = log
        .iter()
        .enumerate()
        .filter(|(i, r)| *i != frame && model.ownership.get(&r.frame.id()) == Some(&ecu))
        .filter_map(|(_, r)| window(r).ok())
        .take(CORPUS_FRAMES)
        .map(|r| trace.samples[r].to_vec())
        .collect();
    Ok(Target {
        series,
        times,
        scorer: TargetScorer::Transmit(classifier),
        corpus: Some(corpus),
    })
}

#[derive(Serialize)]
struct FidelityReport {
    steps: usize,
    deletion_auc: f64,
    insertion_auc: f64,
}

fn write_plot(path: &Path, target: &Target, scores: &[f64]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["t", "value", "score"])?;
    for ((t, v), s) in target.times.iter().zip(&target.series).zip(scores) {
        w.write_record([t.to_string(), v.to_string(), s.to_string()])?;
    }
    w.flush().map_err(CliError::io(path))
}

fn write_variants(path: &Path, target: &Target, bundle: &VariantBundle) -> Result<(), CliError> {
    let variants = &bundle.reconstruction.variants;
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["t".to_string(), "original".to_string()];
    header.extend((0..variants.len()).map(|i| format!("variant_{i}")));
    w.write_record(&header)?;
    for (i, (t, v)) in target.times.iter().zip(&target.series).enumerate() {
        let mut row = vec![t.to_string(), v.to_string()];
        row.extend(variants.iter().map(|var| var.series[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(CliError::io(path))
}

fn summarize(method: &str, map: &SaliencyMap, top_q: f64, eval_count: usize) -> SaliencySummary {
    SaliencySummary {
        method: method.to_string(),
        shape: map.shape,
        argmax: map.argmax(),
        top_q,
        top_set: map.top_fraction(top_q),
        eval_count,
        top_signed: None,
    }
}

pub fn explain(args: &ExplainArgs, seed: u64) -> Result<(), CliError> {
    let target = load_target(&args.target)?;
    let n = target.series.len();
    let shape = Shape::Series(n);
    let classes = target.scorer.num_classes();
    for c in std::iter::once(args.class).chain(args.class_neg) {
        if c >= classes {
            return Err(CliError::Input(format!("class {c} out of range for {classes} classes")));
        }
    }
    let defaults = TimeParams::for_length(n);
    let time = TimeParams {
        k: args.time.k,
        l_min: args.time.l_min.unwrap_or(defaults.l_min),
        l_max: args.time.l_max.unwrap_or(defaults.l_max),
        n_max: args.time.n_max,
        fill: match args.time.fill {
            FillArg::Interpolate => Fill::Interpolate,
            FillArg::Mean => Fill::Mean,
        },
        seed,
        ..defaults
    };
    let top_q = args.mask.top_q;
    let out = &args.out;

    let (file, summary) = match args.method {
        Method::Mask => {
            let params = MaskOptParams {
                batch: args.mask.batch,
                max_iter: args.mask.max_iter,
                p_min: args.mask.p_min,
                p_max: args.mask.p_max,
                kernel: args.mask.kernel,
                lambda: args.mask.lambda,
                eta: args.mask.eta,
                patience: args.mask.patience,
                top_q,
                seed,
                ..MaskOptParams::default()
            };
            let r = optimize_mask(&target.scorer, &target.series, shape, args.class, &params)?;
            let summary = summarize("mask", &r.saliency, top_q, r.eval_count);
            (SaliencyFile::Unsigned(r.saliency), summary)
        }
        Method::Time => {
            let scores = time_scores(&target.scorer, &target.series, &time)?;
            let map = scores.saliency(args.class);
            let summary = summarize("time", &map, top_q, scores.draws());
            (SaliencyFile::Unsigned(map), summary)
        }
        Method::Contrastive => {
            let neg = args
                .class_neg
                .filter(|c| *c != args.class)
                .ok_or_else(|| CliError::Input("--method contrastive needs --class-neg different from --class".into()))?;
            let scores = time_scores(&target.scorer, &target.series, &time)?;
            let signed = scores.contrast(args.class, neg);
            let magnitude: Vec<f64> = signed.scores.iter().map(|d| d.abs()).collect();
            let mut summary = summarize("contrastive", &SaliencyMap::normalized(shape, &magnitude), top_q, scores.draws());
            summary.top_signed = Some(signed.top_abs(5));
            (SaliencyFile::Signed(signed), summary)
        }
        Method::Reconstruct => {
            let scores = time_scores(&target.scorer, &target.series, &time)?;
            let map = scores.saliency(args.class);
            let corpus = match &args.reconstruct.corpus {
                Some(path) => read_corpus(path)?,
                None => target
                    .corpus
                    .clone()
                    .ok_or_else(|| CliError::Input("--method reconstruct on a series needs --corpus".into()))?,
            };
            let l = args.reconstruct.latent_window.unwrap_or((n / 8).max(2));
            let d = args.reconstruct.latent_dims.unwrap_or(l.min(4));
            let model = fit_latent(&corpus, l, d)?;
            let params = ReconstructParams {
                k_variants: args.reconstruct.k_variants,
                sigma: args.reconstruct.sigma,
                tau: args.reconstruct.tau,
                delta: args.reconstruct.delta,
                seed,
            };
            let rec = reconstruct_variants(&target.series, &map, &model, &target.scorer, &params)?;
            // One evaluation of the original input plus one per variant.
            let evals = scores.draws() + 1 + rec.variants.len();
            let bundle = VariantBundle::new(target.series.clone(), rec, &model.variances);
            write_json(&out.join("variants.json"), &bundle)?;
            write_variants(&out.join("variants.csv"), &target, &bundle)?;
            let summary = summarize("reconstruct", &map, top_q, evals);
            eprintln!(
                "span {:?}: {}/{} variants accepted",
                bundle.reconstruction.span,
                bundle.reconstruction.accepted().count(),
                bundle.reconstruction.variants.len()
            );
            (SaliencyFile::Unsigned(map), summary)
        }
    };

    write_saliency(create(&out.join("saliency.txt"))?, &file)?;
    write_plot(&out.join("plot.csv"), &target, file.scores())?;
    if let SaliencyFile::Unsigned(map) = &file {
        let f = deletion_insertion(&target.scorer, &target.series, map, args.class, args.steps, &Baseline::InputMean)?;
        let report = FidelityReport {
            steps: args.steps,
            deletion_auc: f.deletion_auc,
            insertion_auc: f.insertion_auc,
        };
        write_json(&out.join("fidelity.json"), &report)?;
    }
    write_json(&out.join("summary.json"), &summary)?;
    eprintln!("{} on {n} points: argmax {}, {} evaluations", summary.method, summary.argmax, summary.eval_count);
    Ok(())
}
