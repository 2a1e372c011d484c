use std::fmt;

use gem::GemError;

/// Failure of a command, carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, unreadable input, or an input that does not fit
    /// the model. Exit code 2.
    Input(String),
    /// Training or inference failed on valid input. Exit code 1.
    Compute(String),
}

impl CliError {
    pub fn input(e: impl fmt::Display) -> Self {
        CliError::Input(e.to_string())
    }

    pub fn compute(e: impl fmt::Display) -> Self {
        CliError::Compute(e.to_string())
    }

    /// Classifies a library error raised while fitting or predicting.
    pub fn from_fit(e: GemError) -> Self {
        match e {
            GemError::Io(_)
            | GemError::InvalidParameter(_)
            | GemError::DimensionMismatch { .. }
            | GemError::InfeasibleStratified { .. } => CliError::input(e),
            other => CliError::compute(other),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Compute(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = std::result::Result<T, CliError>;
