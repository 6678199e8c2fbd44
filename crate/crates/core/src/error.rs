use thiserror::Error;

/// Errors surfaced by oracles, subsolvers, selectors and drivers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("oracle error: {0}")]
    Oracle(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("inner solver hit {iters} iterations with residual {residual:e}")]
    MaxInnerIters { iters: usize, residual: f64 },
    #[error("objective dropped below {floor:e}; the program appears unbounded below")]
    Unbounded { floor: f64 },
    #[error("linear system is numerically singular (condition estimate {cond:e})")]
    SingularSystem { cond: f64 },
    #[error("covering would need about {predicted} centers")]
    TooManyCenters { predicted: f64 },
    #[error("minorant contract violated: {0}")]
    MinorantViolation(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid problem spec: {0}")]
    InvalidSpec(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T, E = SolverError> = std::result::Result<T, E>;
