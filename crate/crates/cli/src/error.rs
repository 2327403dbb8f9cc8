use std::path::PathBuf;

use fes_core::FesError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("calibration file not found: {}", .0.display())]
    MissingCalibration(PathBuf),

    #[error("{0}")]
    Degenerate(String),

    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::MissingCalibration(_) => 4,
            CliError::Degenerate(_) => 5,
            CliError::Other(_) => 1,
        }
    }

    pub fn io(context: impl std::fmt::Display, err: std::io::Error) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl From<FesError> for CliError {
    fn from(e: FesError) -> Self {
        match e {
            FesError::InvalidArgument(_) => CliError::Config(e.to_string()),
            FesError::DegenerateCalibration { .. } => CliError::Degenerate(e.to_string()),
            FesError::Io(err) => CliError::Io(err.to_string()),
            FesError::NoFeasibleGain(_) | FesError::Format(_) => CliError::Other(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
