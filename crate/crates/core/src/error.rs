use thiserror::Error;

/// Errors produced by the analysis, optimization and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("MCS index {index} out of range (table has {len} rates)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("root not bracketed on [{lo}, {hi}]")]
    RootNotBracketed { lo: f64, hi: f64 },

    #[error("adaptive quadrature did not converge on [{a}, {b}] (error estimate {estimate:e})")]
    QuadratureNonConvergence { a: f64, b: f64, estimate: f64 },

    #[error("convolution grid unresolved: halving the grid changed the result by {change:e}")]
    GridResolution { change: f64 },

    #[error("SNR grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("Dinkelbach bracket failure: F({lambda}) = {value} has the wrong sign")]
    BracketFailure { lambda: f64, value: f64 },

    #[error("non-monotone threshold vector produced by the optimizer")]
    NonMonotone,

    #[error("HARQ buffer overflow: {size} packets exceed capacity {capacity}")]
    BufferOverflow { size: usize, capacity: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
