use thiserror::Error;

/// Errors raised by model construction, sampling, fitting and recovery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SbmError {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// A probability of exactly 0 or 1 contradicts the data; the log-likelihood is -inf.
    #[error("zero-probability configuration: {0}")]
    ImpossibleConfiguration(String),

    #[error("no observed dyads")]
    EmptyObservations,

    #[error("invalid sampling design: {0}")]
    InvalidDesign(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("fewer than Q distinct roots (Vandermonde system is singular)")]
    RepeatedRoots,

    #[error("root with imaginary part {0:e} exceeds tolerance")]
    ComplexRoots(f64),

    #[error("singular system: {0}")]
    Singular(String),
}

pub type Result<T> = std::result::Result<T, SbmError>;
