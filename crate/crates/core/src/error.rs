use thiserror::Error;

/// Errors raised by the library. Certificates (the "violation" branches of a
/// solve) are returned as ordinary outcomes, not through this type.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("schema error at {pointer}: {msg}")]
    Schema { pointer: String, msg: String },
    #[error("unsupported body for {0}")]
    UnsupportedBody(&'static str),
    #[error("inner parallel body is empty (shrink {shrink} exceeds inner radius)")]
    EmptyShrink { shrink: f64 },
    #[error("zero subgradient at an infeasible point of a level set")]
    GradientDegenerate,
    #[error("iteration cap {0} exceeded without the volume rule triggering")]
    IterationCapExceeded(usize),
    #[error("resource bound: {0}")]
    ResourceBound(String),
    #[error("degree {degree} exceeds the configured cap {cap}")]
    OverflowBudget { degree: usize, cap: usize },
    #[error("empty budget set: wealth {wealth} does not exceed shift {shift}")]
    EmptyBudget { wealth: f64, shift: f64 },
    #[error("sperner search exhausted without a witness")]
    ExhaustedWithoutWitness,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
