mod args;
mod data;
mod error;
mod explain;
mod pipeline;

use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde::Serialize;

use args::{Cli, Command};
use error::CliError;

#[derive(Serialize)]
struct Timing {
    command: &'static str,
    wall_clock_s: f64,
    peak_rss_kib: Option<u64>,
    threads: usize,
}

/// Peak resident set size from `/proc`, where available.
fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    let start = Instant::now();
    let name = match &cli.command {
        Command::Simulate(a) => {
            pipeline::simulate(a, cli.seed)?;
            "simulate"
        }
        Command::Train(a) => {
            pipeline::train_model(a)?;
            "train"
        }
        Command::Authenticate(a) => {
            pipeline::authenticate(a)?;
            "authenticate"
        }
        Command::Evaluate(a) => {
            pipeline::evaluate_run(a)?;
            "evaluate"
        }
        Command::Explain(a) => {
            explain::explain(a, cli.seed)?;
            "explain"
        }
    };
    if let Some(path) = &cli.timing {
        let timing = Timing {
            command: name,
            wall_clock_s: start.elapsed().as_secs_f64(),
            peak_rss_kib: peak_rss_kib(),
            threads: rayon::current_num_threads(),
        };
        data::write_json(path, &timing)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
