use std::io;
use std::path::PathBuf;

/// Exit codes shared by every subcommand.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DIVERGED: i32 = 3;
    pub const IO: i32 = 4;
    pub const OTHER: i32 = 1;
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] yescert_core::Error),
}

impl RunError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        RunError::Config { path: path.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        RunError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        use yescert_core::Error as E;
        match self {
            RunError::Config { .. } => exit::CONFIG,
            RunError::Io { .. } => exit::IO,
            RunError::Core(E::Ingestion { .. }) => exit::IO,
            RunError::Core(
                E::Config(_) | E::InfeasibleTarget { .. } | E::LayerShape { .. } | E::DimensionMismatch { .. },
            ) => exit::CONFIG,
            RunError::Core(E::TrainingFault(_)) => exit::DIVERGED,
            RunError::Core(_) => exit::OTHER,
        }
    }
}

pub type Result<T, E = RunError> = std::result::Result<T, E>;
