use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate transform: condition number {0:.3e} exceeds threshold")]
    DegenerateTransform(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("physics violation: {0}")]
    Physics(String),

    #[error("shape mismatch in `{op}`: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("unknown tape node {0}")]
    UnknownNode(usize),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("missing ground truth: {0}")]
    MissingGroundTruth(String),

    #[error("non-finite value in `{0}`")]
    NonFinite(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dims_mismatch(expected: impl std::fmt::Debug, got: impl std::fmt::Debug) -> Error {
    Error::DimensionMismatch {
        expected: format!("{expected:?}"),
        got: format!("{got:?}"),
    }
}
