use std::path::PathBuf;

use hazard_twin_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum TwinError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing upstream: {0}")]
    MissingArtifact(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {message}")]
    Artifact { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("stage {stage} failed: {source}")]
    Stage { stage: &'static str, source: Box<TwinError> },
}

pub type TwinResult<T> = Result<T, TwinError>;

impl TwinError {
    pub fn artifact(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Self::Artifact { path: path.into(), message: message.to_string() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Core(CoreError::InvalidConfig(_)) => 2,
            Self::MissingArtifact(_) => 3,
            Self::Core(CoreError::Numerical(_)) => 4,
            Self::Stage { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
