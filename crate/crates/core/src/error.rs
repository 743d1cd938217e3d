//! Error type shared by every module, with the CLI exit-code mapping.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes, vectors or images whose dimensions do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Invalid or inconsistent input data.
    #[error("invalid data: {0}")]
    Data(String),

    /// Diverged or otherwise non-finite numerics.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Bad configuration or usage.
    #[error("configuration error: {0}")]
    Config(String),

    /// The aspect-ratio population does not support a two-group split;
    /// callers fall back to a single shape model.
    #[error("degenerate aspect-ratio split: {0}")]
    DegenerateSplit(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Dimension(_)
            | Error::Data(_)
            | Error::DegenerateSplit(_)
            | Error::Io { .. }
            | Error::Serde(_)
            | Error::Codec(_) => 2,
            Error::Numeric(_) => 3,
        }
    }
}
