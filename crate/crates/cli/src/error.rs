use std::path::PathBuf;

use hele_shaw_core::dynamics::DynamicsError;
use hele_shaw_core::perturbation::PerturbationError;
use hele_shaw_core::rescaling::RescalingError;
use thiserror::Error;

use crate::config::ConfigError;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    /// Blow-up, exhaustion or loss of univalence before the requested time.
    pub const STOPPED: i32 = 2;
    pub const INVALID_INPUT: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed table {path}: {message}")]
    Table { path: PathBuf, message: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) | CliError::Read { .. } | CliError::Table { .. } => {
                exit::INVALID_INPUT
            }
            CliError::Write { .. } | CliError::Numerical(_) => exit::NUMERICAL,
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::Aliasing { .. } | DynamicsError::NonFinite => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<PerturbationError> for CliError {
    fn from(e: PerturbationError) -> Self {
        match e {
            PerturbationError::Dynamics(d) => d.into(),
            PerturbationError::Incomplete { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<RescalingError> for CliError {
    fn from(e: RescalingError) -> Self {
        match e {
            RescalingError::NotStarlike { .. } | RescalingError::InsufficientData(_) | RescalingError::BadWindow(..) => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}
