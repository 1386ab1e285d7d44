use std::path::{Path, PathBuf};

use canlens::auth::AuthError;
use canlens::can::CanError;
use canlens::explain::ExplainError;
use canlens::power::PowerError;
use canlens::reconstruct::ReconstructError;
use canlens::sim::SimError;
use thiserror::Error;

/// Command failure, split by exit code: 2 for bad input or configuration,
/// 3 for data that parses but cannot support the computation.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Degenerate(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io { .. } => 2,
            CliError::Degenerate(_) => 3,
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

macro_rules! input_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        }
    )*};
}

input_error!(SimError, PowerError, CanError, csv::Error, serde_json::Error);

impl From<AuthError> for CliError {
    fn from(e: AuthError) -> Self {
        match e {
            AuthError::DegenerateLabels | AuthError::DegenerateLabelsFor(_) | AuthError::NoVerdicts => {
                CliError::Degenerate(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<ExplainError> for CliError {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::InsufficientCoverage { .. } => CliError::Degenerate(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<ReconstructError> for CliError {
    fn from(e: ReconstructError) -> Self {
        match e {
            ReconstructError::Explain(inner) => inner.into(),
            ReconstructError::CorpusTooSmall { .. }
            | ReconstructError::NothingToReconstruct(_)
            | ReconstructError::NoVariation => CliError::Degenerate(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}
