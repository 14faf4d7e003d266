use std::path::PathBuf;

use pushmpc_core::Error as CoreError;
use thiserror::Error;

/// Errors of the command-line layer, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Simulation(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Format { .. } => 1,
            CliError::Validation(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Simulation(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        CliError::Format { path: path.into(), message: message.to_string() }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter(_)
            | CoreError::Withdrawal(_)
            | CoreError::ZeroVelocity
            | CoreError::InfeasibleCurvature { .. }
            | CoreError::Empty(_) => CliError::Validation(e.to_string()),
            CoreError::SingularKernel { .. } => CliError::Solver(format!(
                "{e}; the training set likely holds duplicate inputs with no noise, \
                 remove duplicates or raise the noise floor"
            )),
            CoreError::AllModesInfeasible | CoreError::SolverFailure => CliError::Solver(e.to_string()),
            CoreError::NoConsistentMode { .. } | CoreError::ContactLost { .. } | CoreError::RunAborted { .. } => {
                CliError::Simulation(e.to_string())
            }
        }
    }
}
