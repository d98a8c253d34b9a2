use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite values produced at {0}")]
    NonFinite(String),

    #[error("backward requires a single-element loss, got {0} elements")]
    NonScalarLoss(usize),

    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("dataset pairing error: {0}")]
    Pairing(String),

    #[error("image error in {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("average surface distance is undefined for an empty mask")]
    UndefinedAsd,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by numerics rather than input or IO.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Image { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
