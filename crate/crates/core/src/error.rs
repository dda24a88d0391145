use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("filter bank is not zero-DC")]
    NotZeroDc,

    #[error("bank fingerprint mismatch between templates")]
    FingerprintMismatch,

    #[error("no overlapping valid pixels ({valid} < {required})")]
    NoOverlap { valid: usize, required: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("zero pooled variance")]
    ZeroVariance,

    #[error("unsupported image format in {path}: {reason}")]
    UnsupportedImage { path: PathBuf, reason: String },

    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("malformed payload: {0}")]
    Format(String),

    #[error("truncated payload: {0}")]
    Truncated(&'static str),

    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    #[error("duplicate manifest key ({subject}, {sample}) on lines {first} and {second}")]
    DuplicateEntry {
        subject: String,
        sample: String,
        first: usize,
        second: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
