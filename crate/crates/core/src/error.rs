use std::io;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("phase of a zero CFR is undefined")]
    ZeroCfr,
    #[error("non-finite CFR component")]
    NonFinite,
    #[error("invalid CSI sequence: {0}")]
    InvalidSequence(String),

    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated payload: need {expected} bytes, have {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("CFR component {0} does not fit in a signed byte")]
    RangeOverflow(f64),
    #[error("parse error: {0}")]
    Parse(String),

    #[error("empty series")]
    EmptySeries,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("packet count {packets} is not divisible by frame count {frames}")]
    IndivisiblePacketCount { packets: usize, frames: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("probability {0} outside (0, 1)")]
    DomainError(f64),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::ShapeMismatch(msg.into())
}
