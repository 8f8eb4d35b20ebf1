//! Error types for the solver crate, grouped per subsystem.

use thiserror::Error;

/// Errors from sparse storage, vector kernels and Matrix Market ingestion.
#[derive(Debug, Error)]
pub enum SparseError {
    #[error("dimension mismatch: matrix is {matrix} but vector has length {vector}")]
    DimensionMismatch { matrix: usize, vector: usize },
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("matrix is not square: {rows} x {cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("line {line}: entry ({i}, {j}) out of range for order {n}")]
    IndexOutOfRange {
        line: usize,
        i: usize,
        j: usize,
        n: usize,
    },
    #[error("line {line}: duplicate entry ({i}, {j})")]
    DuplicateEntry { line: usize, i: usize, j: usize },
    #[error("general file is not symmetric: A({i},{j}) = {a} but A({j},{i}) = {b}")]
    NotSymmetric { i: usize, j: usize, a: f64, b: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Errors from the dense reference eigensolver and direct shifted solver.
#[derive(Debug, Error)]
pub enum OracleError {
    #[error(
        "order {n} exceeds the densification cap {cap}; supply a spectral reference externally"
    )]
    CapExceeded { n: usize, cap: usize },
    #[error("target eigenvalue not simple: |λ1−σ| and |λ2−σ| agree within {gap:e}")]
    NotSimple { gap: f64 },
    #[error("QL iteration failed to converge for eigenvalue index {index}")]
    NoConvergence { index: usize },
    #[error("numerically singular factorization: pivot magnitude {pivot:e}")]
    SingularFactor { pivot: f64 },
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Errors from the Lanczos inner solver.
#[derive(Debug, Error)]
pub enum LanczosError {
    #[error("projected system undefined: {m} Lanczos steps, need at least 2")]
    ProjectedUndefined { m: usize },
    #[error("inner solve requires a unit right-hand side (norm was {norm})")]
    NonUnitRhs { norm: f64 },
    #[error("tuned preconditioner is not positive definite: ⟨v, 𝒬v⟩ = {value:e} at step {step}")]
    IndefiniteMetric { value: f64, step: usize },
}

/// Errors from the outer iteration.
#[derive(Debug, Error)]
pub enum RqiError {
    #[error("inner solver returned null solution")]
    NullSolution,
    #[error("rayleigh quotient requires a unit vector (norm was {norm})")]
    NonUnitVector { norm: f64 },
    #[error("initial vector strategy PerturbedReference requires a spectral reference")]
    MissingReference,
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Lanczos(#[from] LanczosError),
    #[error(transparent)]
    Precond(#[from] PrecondError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Errors from preconditioner construction and application.
#[derive(Debug, Error)]
pub enum PrecondError {
    #[error("matrix resists positive-definite approximation (diagonal shift reached {alpha:e})")]
    ShiftEscalationFailed { alpha: f64 },
    #[error("tuned preconditioner singular: denom + wᵀQ⁻¹w = {value:e}")]
    TunedSingular { value: f64 },
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Errors from diagnostics and measurement.
#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("reference does not match the trace: {0}")]
    ReferenceMismatch(String),
    #[error("insufficient asymptotic data: {usable} usable steps in the window, need {needed}")]
    InsufficientData { usable: usize, needed: usize },
    #[error("malformed table csv at line {line}: {msg}")]
    TableParse { line: usize, msg: String },
}
