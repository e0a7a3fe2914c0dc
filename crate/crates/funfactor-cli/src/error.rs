//! Command failures, classified by process exit code.

use funfactor::{DataError, InferenceError, MetricsError, PostprocessError, SimError};
use std::path::Path;
use thiserror::Error;

/// Anything a subcommand can fail with. Each variant owes the shell a
/// distinct exit code so batch drivers can tell a typo from a diverged fit:
/// 2 configuration, 3 data, 4 numerics, 5 partial replicate failure
/// (0 is success; argument parsing itself also exits with 2).
#[derive(Debug, Error)]
pub enum CliError {
    /// The run was never viable: malformed config, unknown keys, bad flags.
    #[error("config error: {0}")]
    Config(String),
    /// Input or output files could not be read, parsed, or written, or
    /// inputs disagree with each other (e.g. fit and truth shapes).
    #[error("data error: {0}")]
    Data(String),
    /// The model itself broke down while fitting or post-processing.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// More replicates failed than the tolerated share.
    #[error("partial replicate failure: {0}")]
    Partial(String),
}

impl CliError {
    /// Shell exit code for this failure class.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Partial(_) => 5,
        }
    }

    /// Data-class error carrying the offending path.
    pub fn at(path: &Path, err: impl std::fmt::Display) -> CliError {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match &e {
            // An unusable annealing schedule is a settings problem, and
            // dataset or basis construction failures are data problems;
            // only genuine optimizer breakdowns count as numerical.
            InferenceError::BadSchedule(_) => CliError::Config(e.to_string()),
            InferenceError::Data(_) | InferenceError::Spline(_) => CliError::Data(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<PostprocessError> for CliError {
    fn from(e: PostprocessError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) => CliError::Config(e.to_string()),
            SimError::RankDeficiency { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
