//! Error types shared across the solver.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building grids, data, or running solves.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid resolution: {0}")]
    InvalidResolution(String),

    #[error("non-finite state detected in {0}")]
    NonFiniteState(String),

    #[error("degenerate Jacobian: |J| = {value:.3e} at node {node:?}")]
    DegenerateJacobian { value: f64, node: (usize, usize, usize) },

    #[error("density decay exponent must be positive, got {0}")]
    DecayViolation(f64),

    #[error("vacuum condition violated: grad_n theta0 = {value:.6e} at boundary node {node:?}")]
    VacuumConditionViolation { value: f64, node: (usize, usize, usize) },

    #[error("unbounded derived initial field {field}: |{value:.3e}| exceeds 1e12 (incompatible profile pairing)")]
    UnboundedDerivative { field: &'static str, value: f64 },

    #[error("singular mass matrix: min eigenvalue {0:.3e}")]
    SingularMass(f64),

    #[error("linear solve failed at step {step} ({context})")]
    LinearSolveFailure { step: usize, context: String },

    #[error("a priori assumption violated: {0}")]
    AprioriViolated(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("iteration is not contracting: {0}; reduce the time horizon T (the theorem guarantees contraction only for small enough T)")]
    NonContraction(String),

    #[error("Picard iteration exceeded {max_iter} iterations (last distance {last:.3e})")]
    MaxIterExceeded { max_iter: usize, last: f64 },

    #[error("insufficient history at step {step}: {need}")]
    InsufficientHistory { step: usize, need: &'static str },

    #[error("zero-trace norm requested but field does not vanish on the boundary (max trace {0:.3e})")]
    TraceViolation(f64),

    #[error("non-positive state in {field}: {value:.3e} at interior node")]
    NonPositiveState { field: &'static str, value: f64 },

    #[error("Hardy inequality is not defined for exponent k = 1")]
    UnsupportedExponent,

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
