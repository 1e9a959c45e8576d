//! Crate-wide error type.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format at {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch in {layer}: {message}")]
    Shape { layer: String, message: String },

    #[error("network spec error: {0}")]
    Spec(String),

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("loss composition error: {0}")]
    Composition(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("metric report error: {0}")]
    Report(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn shape(layer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Shape { layer: layer.into(), message: message.into() }
    }

    /// Process exit code the CLI maps this error to: config errors exit 1,
    /// everything else (runtime/numeric) exits 2.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
