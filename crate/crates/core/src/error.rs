use thiserror::Error;

/// Errors produced anywhere in the certification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the operation's domain (bad cell, action, index...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A malformed or inconsistent experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A file that does not match its declared schema.
    #[error("format error: {0}")]
    Format(String),

    /// The privacy accountant cannot provide any guarantee for these inputs.
    #[error("no privacy guarantee: {0}")]
    NoGuarantee(String),

    /// A numerical routine failed to converge or produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A runtime check on certificate validity or monotonicity failed.
    #[error("assertion failed: {0}")]
    Assertion(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
