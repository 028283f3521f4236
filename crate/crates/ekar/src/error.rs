use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, EkarError>;

#[derive(Debug, thiserror::Error)]
pub enum EkarError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Data { path: PathBuf, line: usize, msg: String },

    #[error("unknown entity id {0}")]
    UnknownEntity(u32),

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("bad checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },
}

impl EkarError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EkarError::Io { path: path.into(), source }
    }

    pub fn data(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        EkarError::Data { path: path.into(), line, msg: msg.into() }
    }

    /// Process exit code per interface contract: 2 for data problems,
    /// 3 for training failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            EkarError::Data { .. } | EkarError::Io { .. } | EkarError::UnknownEntity(_) => 2,
            EkarError::Diverged(_) => 3,
            EkarError::Config(_) => 1,
            EkarError::Checkpoint { .. } => 2,
        }
    }
}
