use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("invalid block spec {spec:?} for dims {dims:?}: {reason}")]
    InvalidBlockSpec {
        spec: [usize; 3],
        dims: [usize; 3],
        reason: &'static str,
    },

    #[error("index {index} out of range for axis of length {len}")]
    OutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected:?}, got {found:?}")]
    DimensionMismatch { expected: [usize; 3], found: [usize; 3] },

    #[error("spacing mismatch between sources")]
    SpacingMismatch,

    #[error("need at least {needed} sources, got {got}")]
    TooFewSources { needed: usize, got: usize },

    #[error("missing subband {0}")]
    MissingSubband(&'static str),

    #[error("unknown wavelet filter `{0}`")]
    UnknownWavelet(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("degenerate metric input: {0}")]
    DegenerateInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid scene: field `{field}`: {reason}")]
    InvalidScene { field: String, reason: String },

    #[error("FWHM: {0}")]
    Fwhm(String),

    #[error("malformed VOLF data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
