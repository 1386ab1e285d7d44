//! Layout of a simulation directory:
//!
//! ```text
//! config.toml        copy of the network configuration
//! summary.json       simulator summary (seed, duration, counts)
//! frames.csv         frame log
//! timeline.csv       per-ECU transmit intervals
//! traces/<ECU>.txt   power traces
//! labels/<ECU>.csv   window labels
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use canlens::can::{read_frame_log, FrameRecord};
use canlens::power::{read_trace, PowerTrace};
use canlens::sim::{read_timeline, spans_by_ecu, NetworkConfig};
use serde::Serialize;

use crate::error::CliError;

pub struct SimDir {
    root: PathBuf,
}

impl SimDir {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.json")
    }

    pub fn frames(&self) -> PathBuf {
        self.root.join("frames.csv")
    }

    pub fn timeline(&self) -> PathBuf {
        self.root.join("timeline.csv")
    }

    pub fn traces(&self) -> PathBuf {
        self.root.join("traces")
    }

    pub fn labels(&self) -> PathBuf {
        self.root.join("labels")
    }

    pub fn read_config(&self) -> Result<(NetworkConfig, String), CliError> {
        let path = self.config();
        let text = fs::read_to_string(&path).map_err(CliError::io(&path))?;
        Ok((NetworkConfig::from_toml(&text)?, text))
    }

    pub fn read_log(&self) -> Result<Vec<FrameRecord>, CliError> {
        Ok(read_frame_log(open(&self.frames())?)?)
    }

    pub fn read_spans(&self) -> Result<BTreeMap<String, Vec<(f64, f64)>>, CliError> {
        Ok(spans_by_ecu(&read_timeline(open(&self.timeline())?)?))
    }

    pub fn read_traces(&self) -> Result<BTreeMap<String, PowerTrace>, CliError> {
        let dir = self.traces();
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(CliError::io(&dir))?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(CliError::io(&dir))?;
        paths.retain(|p| p.extension().is_some_and(|e| e == "txt"));
        paths.sort();
        let mut out = BTreeMap::new();
        for p in paths {
            let trace = read_trace(open(&p)?)?;
            out.insert(trace.ecu.clone(), trace);
        }
        if out.is_empty() {
            return Err(CliError::Input(format!("no traces in {}", dir.display())));
        }
        Ok(out)
    }

    /// `(seed, duration_s)` from the summary.
    pub fn read_run(&self) -> Result<(u64, f64), CliError> {
        let path = self.summary();
        let v: serde_json::Value = serde_json::from_reader(open(&path)?)?;
        let seed = v["seed"].as_u64();
        let duration = v["duration_s"].as_f64();
        seed.zip(duration)
            .ok_or_else(|| CliError::Input(format!("{}: missing seed or duration_s", path.display())))
    }
}

pub fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(CliError::io(path))
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    File::create(path).map(BufWriter::new).map_err(CliError::io(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(CliError::io(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}
