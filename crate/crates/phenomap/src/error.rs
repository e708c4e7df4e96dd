use std::path::PathBuf;

use phenomap_core::Error as CoreError;

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERICAL: i32 = 4;
    pub const NO_STABLE_CLUSTERING: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("schema config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("artifact: {0}")]
    Artifact(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("no configuration met the validity cutoff")]
    NoStableClustering,
}

impl PipelineError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(e) if e.is_numerical() => exit::NUMERICAL,
            Self::Core(CoreError::Parameter(_)) | Self::Usage(_) => exit::USAGE,
            Self::NoStableClustering => exit::NO_STABLE_CLUSTERING,
            _ => exit::DATA,
        }
    }
}
