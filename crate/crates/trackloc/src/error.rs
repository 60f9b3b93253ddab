use thiserror::Error;

/// Crate-wide error type. The CLI maps each variant class to a distinct
/// process exit code (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad hyperparameter values, malformed config
    /// files, unknown keys, missing required settings.
    #[error("config error: {0}")]
    Config(String),

    /// Invalid data: malformed input files, degenerate geometry, shape
    /// mismatches between tensors, checkpoints and features.
    #[error("data error: {0}")]
    Data(String),

    /// Training diverged (non-finite loss or gradient).
    #[error("numeric divergence: {0}")]
    Divergence(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// Process exit code contract: 0 success, 2 config error, 3 data/io
    /// error, 4 numeric divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            Error::Divergence(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
