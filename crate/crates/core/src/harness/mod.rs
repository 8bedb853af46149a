//! Configuration, output files, convergence study and command line.

pub mod cli;
pub mod config;
pub mod convergence;
pub mod output;

use std::path::PathBuf;

use thiserror::Error;

use crate::mesh::MeshError;
use crate::stepper::StepError;

pub use config::{parse_config, ConfigError, SimulationConfig};
pub use convergence::{run_convergence, ConvergenceReport};
pub use output::{run_single, RunOutcome};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("setup: {0}")]
    Setup(#[from] StepError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{dir} holds results of config {found}, refusing to mix with {expected}")]
    Provenance {
        dir: PathBuf,
        expected: String,
        found: String,
    },
    #[error("run failed after {accepted} steps: {error}")]
    Run { error: StepError, accepted: usize },
    #[error("convergence study: {0}")]
    Study(String),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for input and file problems, 2 for solver failures, 3 for broken invariants.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Run {
                error: StepError::Invariant { .. },
                ..
            } => 3,
            HarnessError::Run { .. } => 2,
            _ => 1,
        }
    }
}
