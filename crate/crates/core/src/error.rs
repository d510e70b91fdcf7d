//! Error type shared across the toolkit.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point ({0}, {1}, {2}) is outside the volume/bounding box")]
    OutOfBounds(f64, f64, f64),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("insufficient directions: shell b={bvalue} has {have} directions, basis needs {need}")]
    InsufficientDirections { bvalue: f64, have: usize, need: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("streamline cannot be sampled: every point lies outside the volume")]
    Unsampleable,

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format { offset, msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
