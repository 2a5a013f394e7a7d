use std::path::Path;

use decoy_core::Error as CoreError;

/// Process exit codes by error class.
pub mod exit {
    pub const RUNTIME: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const CONDITION: u8 = 3;
    pub const VERIFICATION: u8 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Core(CoreError::ConditionViolated(_)) => exit::CONDITION,
            CliError::Core(CoreError::InvalidParameter(_))
            | CliError::Core(CoreError::DegenerateSource(_))
            | CliError::Core(CoreError::TailTooLarge { .. })
            | CliError::Core(CoreError::MissingVacuumSource) => exit::CONFIG,
            CliError::Core(_) | CliError::Io { .. } | CliError::Csv(_) => exit::RUNTIME,
            CliError::Verification(_) => exit::VERIFICATION,
        }
    }
}
