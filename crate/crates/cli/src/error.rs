use grbsde_core::Error;
use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum CliError {
    /// Unreadable or inconsistent input; exit code 1.
    #[error("input error: {0}")]
    Input(String),
    /// A checked property failed; exit code 2.
    #[error("property violation: {0}")]
    Violation(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io(_) => 1,
            CliError::Violation(_) => 2,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NonConvergence { .. }
            | Error::Monotonicity { .. }
            | Error::NoFixedPoint { .. } => CliError::Violation(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}
