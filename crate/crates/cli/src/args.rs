use std::path::PathBuf;

use canlens::auth::DEFAULT_WINDOW_S;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "canlens", version, about = "CAN sender authentication from ECU power traces, with saliency explanations")]
pub struct Cli {
    /// Seed for every stochastic step
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 1 gives bit-exact reruns on any machine
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write wall-clock time and peak memory of the command to this JSON file
    #[arg(long, global = true)]
    pub timing: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a network and write the frame log, timeline, traces and window labels
    Simulate(SimulateArgs),
    /// Fit one transmit classifier per ECU from a simulation directory
    Train(TrainArgs),
    /// Authenticate every logged frame against the power traces
    Authenticate(AuthenticateArgs),
    /// Score verdicts against the simulator's ground truth and write a run report
    Evaluate(EvaluateArgs),
    /// Explain a scorer's decision on one series or one frame window
    Explain(Box<ExplainArgs>),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Network configuration (TOML)
    pub config: PathBuf,
    /// Simulated time in seconds
    #[arg(long, default_value_t = 60.0)]
    pub duration: f64,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Label window length in seconds
    #[arg(long, default_value_t = DEFAULT_WINDOW_S)]
    pub window_s: f64,
    /// Fraction of a window that must overlap a transmission to label it transmitting
    #[arg(long, default_value_t = 0.5)]
    pub overlap: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Simulation directory written by `simulate`
    #[arg(long)]
    pub data: PathBuf,
    /// Output model file (JSON)
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_WINDOW_S)]
    pub window_s: f64,
    #[arg(long, default_value_t = 0.5)]
    pub overlap: f64,
    /// Alert threshold stored with the model
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    /// Gradient-descent learning rate
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    /// L2 penalty on the weights
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    /// Train on windows starting at or after this time (s)
    #[arg(long, default_value_t = 0.0)]
    pub t_from: f64,
    /// Train on windows ending at or before this time (s); default: whole run
    #[arg(long)]
    pub t_to: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AuthenticateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Output verdict log (CSV)
    #[arg(long)]
    pub out: PathBuf,
    /// Alert threshold; default: the model's
    #[arg(long)]
    pub theta: Option<f64>,
    /// Only frames starting at or after this time (s)
    #[arg(long, default_value_t = 0.0)]
    pub t_from: f64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub verdicts: PathBuf,
    /// Output run report (JSON)
    #[arg(long)]
    pub out: PathBuf,
    /// Explanation summaries to include in the report
    #[arg(long = "explanation")]
    pub explanations: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Mask,
    Time,
    Contrastive,
    Reconstruct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FillArg {
    Interpolate,
    Mean,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub target: TargetArgs,

    /// Class to explain
    #[arg(long, default_value_t = 1)]
    pub class: usize,
    /// Contrasting class for --method contrastive
    #[arg(long)]
    pub class_neg: Option<usize>,
    /// Deletion/insertion curve points
    #[arg(long, default_value_t = 33)]
    pub steps: usize,

    #[command(flatten)]
    pub mask: MaskArgs,
    #[command(flatten)]
    pub time: TimeArgs,
    #[command(flatten)]
    pub reconstruct: ReconstructArgs,
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    /// Series file: one value per line, `#` comments allowed
    #[arg(long, requires = "scorer", conflicts_with_all = ["data", "frame"])]
    pub series: Option<PathBuf>,
    /// Analytic scorer for --series: `keyed:START:END` or `level:START:END:THRESHOLD:GAIN`
    #[arg(long)]
    pub scorer: Option<String>,
    /// Simulation directory, for frame targets
    #[arg(long, requires_all = ["model", "frame"])]
    pub data: Option<PathBuf>,
    /// Trained model, for frame targets
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Row of the frame log whose window is explained
    #[arg(long)]
    pub frame: Option<usize>,
    /// ECU whose classifier and trace are used; default: the frame id's owner
    #[arg(long)]
    pub ecu: Option<String>,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    /// Masks per iteration
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0.1)]
    pub p_min: f64,
    #[arg(long, default_value_t = 0.9)]
    pub p_max: f64,
    /// Box smoothing width
    #[arg(long, default_value_t = 3)]
    pub kernel: usize,
    /// L1 shrinkage per iteration
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    /// EMA rate
    #[arg(long, default_value_t = 0.3)]
    pub eta: f64,
    /// Iterations the top set must stay unchanged
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// Top fraction used for the stop rule and summaries
    #[arg(long, default_value_t = 0.1)]
    pub top_q: f64,
}

#[derive(Debug, Args)]
pub struct TimeArgs {
    /// Sub-samples
    #[arg(long, default_value_t = 1000)]
    pub k: usize,
    /// Shortest window; default: ceil(T/16)
    #[arg(long)]
    pub l_min: Option<usize>,
    /// Longest window; default: ceil(T/4)
    #[arg(long)]
    pub l_max: Option<usize>,
    /// Windows per sub-sample
    #[arg(long, default_value_t = 3)]
    pub n_max: usize,
    #[arg(long, value_enum, default_value_t = FillArg::Interpolate)]
    pub fill: FillArg,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Corpus for the latent model: one comma-separated series per line
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Latent window length; default: max(T/8, 2)
    #[arg(long)]
    pub latent_window: Option<usize>,
    /// Latent dimensions; default: min(4, latent window)
    #[arg(long)]
    pub latent_dims: Option<usize>,
    #[arg(long, default_value_t = 32)]
    pub k_variants: usize,
    /// Latent jitter in standard deviations
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    /// Saliency threshold for the region
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Largest accepted confidence drop
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
}
