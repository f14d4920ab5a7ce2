use std::path::PathBuf;

use crackseg_core::Error as CoreError;

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const TRAINING: i32 = 4;
    pub const MISSING_INPUT: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("missing input {path}: {what}")]
    Missing { path: PathBuf, what: &'static str },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Missing { .. } => exit::MISSING_INPUT,
            CliError::Core(e) => match e {
                CoreError::Io { .. }
                | CoreError::Format { .. }
                | CoreError::Shape(_)
                | CoreError::Split(_)
                | CoreError::Generation(_) => exit::DATA,
                CoreError::InvalidArgument(_) | CoreError::Optimizer(_) => exit::CONFIG,
                _ => exit::TRAINING,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
