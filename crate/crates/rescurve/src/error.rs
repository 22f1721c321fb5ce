use thiserror::Error;

/// Errors produced by the rescurve pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or parameters (CLI exit code 2).
    #[error("config error: {0}")]
    Config(String),
    /// The data itself is unusable (CLI exit code 3).
    #[error("data error: {0}")]
    Data(String),
    /// An operation was called outside its domain.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
