//! Failure classes and their exit codes.

use std::path::PathBuf;

use priceopt::demand::DemandError;
use priceopt::sdprelax::RoundingError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or config values.
    #[error("{0}")]
    Usage(String),
    /// Unreadable or malformed input files.
    #[error("{0}")]
    Input(String),
    #[error("fit failed: {0}")]
    Fit(DemandError),
    #[error("{0}")]
    Solve(RoundingError),
    #[error("cannot write {}: {message}", path.display())]
    Output { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => 2,
            CliError::Fit(_) => 3,
            CliError::Solve(RoundingError::NoFeasibleFound) => 5,
            CliError::Solve(RoundingError::InvalidArgument(_) | RoundingError::Bqp(_)) => 2,
            CliError::Solve(_) => 4,
            CliError::Output { .. } => 6,
        }
    }

    /// Short machine-readable tag for the stderr diagnostic.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Input(_) => "input",
            CliError::Fit(_) => "fit_failure",
            CliError::Solve(RoundingError::NoFeasibleFound) => "no_feasible_found",
            CliError::Solve(RoundingError::InvalidArgument(_) | RoundingError::Bqp(_)) => "input",
            CliError::Solve(_) => "sdp_solve_failure",
            CliError::Output { .. } => "io",
        }
    }

    pub fn input(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Input(format!("{context}: {err}"))
    }

    pub fn output(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        CliError::Output {
            path: path.into(),
            message: err.to_string(),
        }
    }
}
