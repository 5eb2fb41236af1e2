use std::path::PathBuf;

use thiserror::Error;

use crate::patch::Pos;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("failed to encode image: {0}")]
    Encode(String),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("invalid image buffer: {0}")]
    InvalidImage(String),
    #[error("expected {expected} channels, found {found}")]
    ChannelCount { expected: usize, found: usize },
    #[error("image {width}x{height} is smaller than required {required}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        required: usize,
    },
    #[error("patch center {0} lies outside the valid patch rectangle")]
    OutsideValidRect(Pos),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("label {0} appears inside the hole but nowhere outside it")]
    UnsupportedLabel(u32),
    #[error("invalid constraint geometry: {0}")]
    InvalidConstraint(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("model fit failed: {0}")]
    FitFailed(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("I/O error: {0}")]
    Stream(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
