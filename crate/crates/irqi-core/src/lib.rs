//! Inexact Rayleigh quotient iteration for sparse symmetric
//! eigenproblems, with unpreconditioned and tuned-preconditioned
//! Lanczos inner solvers, a dense reference oracle, and diagnostics
//! that measure the method's convergence behavior against the oracle.

// Index loops mirror the factorization and substitution algorithms
// they implement.
#![allow(clippy::needless_range_loop)]

pub mod dense;
pub mod diagnostics;
pub mod error;
pub mod lanczos;
pub mod oracle;
pub mod precond;
pub mod rqi;
pub mod sparse;

pub use dense::DenseVector;
pub use sparse::{load_matrix_market, SymmetricSparseMatrix};
