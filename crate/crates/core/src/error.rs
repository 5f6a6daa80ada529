use thiserror::Error;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Two vectors that must share a length do not.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch {
        /// Length required by the receiver.
        expected: usize,
        /// Length that was supplied.
        got: usize,
    },
    /// A gradient or parameter entry was NaN or infinite.
    #[error("diverged input: non-finite value at index {index}")]
    NonFinite {
        /// First offending coordinate.
        index: usize,
    },
    /// A hyperparameter or size is outside its admissible range.
    #[error("invalid {name}: {reason}")]
    InvalidParameter {
        /// Parameter name.
        name: &'static str,
        /// Human readable constraint that was violated.
        reason: &'static str,
    },
    /// A loss or gradient was requested for a batch with no members.
    #[error("empty batch")]
    EmptyBatch,
    /// A batch refers to a sample outside `0..num_samples`.
    #[error("sample index {index} out of range for {len} samples")]
    IndexOutOfRange {
        /// Offending index.
        index: usize,
        /// Number of samples.
        len: usize,
    },
    /// A fitter was given fewer points than its model needs.
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints {
        /// Minimum number of points.
        needed: usize,
        /// Points supplied.
        got: usize,
    },
}

/// Result alias for the core crate.
pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: &'static str) -> Error {
    Error::InvalidParameter { name, reason }
}
