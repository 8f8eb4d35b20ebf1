//! The outer Rayleigh quotient iteration with pluggable inner solvers.
//!
//! Each outer step computes the Rayleigh quotient, solves the shifted
//! system `(A - theta_k I) w = u_k` either exactly (dense oracle) or by
//! the Lanczos inner solver under a tolerance strategy, then normalizes.
//! Everything an outer step produced is recorded in the run trace so
//! the diagnostics can evaluate the convergence bounds afterwards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::{self, DenseVector};
use crate::error::RqiError;
use crate::lanczos::{self, InnerSolveResult, InnerStop};
use crate::oracle::{self, SpectralReference};
use crate::precond::{self, BasePreconditioner};
use crate::sparse::SymmetricSparseMatrix;

/// One outer iterate: unit vector, Rayleigh quotient, eigenresidual norm.
#[derive(Debug, Clone)]
pub struct OuterIterate {
    pub u: DenseVector,
    pub theta: f64,
    pub r_norm: f64,
    pub k: usize,
}

/// How accurately the inner systems are solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ToleranceStrategy {
    /// Direct dense solve; xi_k = 0 at every step.
    Exact,
    /// Fixed inner tolerance xi, capped at m_max Lanczos steps.
    FixedXi { xi: f64, m_max: usize },
    /// Decreasing tolerance xi_k = ||r_k|| / ||A||_1, capped at m_max.
    Decreasing { m_max: usize },
    /// Exactly m Lanczos steps per outer iteration.
    FixedSteps(usize),
}

impl ToleranceStrategy {
    pub fn validate(&self) -> Result<(), RqiError> {
        match *self {
            ToleranceStrategy::Exact => Ok(()),
            ToleranceStrategy::FixedXi { xi, m_max } => {
                if xi <= 0.0 {
                    Err(RqiError::BadConfig(format!(
                        "fixed xi must be > 0, got {xi}"
                    )))
                } else if m_max < 2 {
                    Err(RqiError::BadConfig(format!(
                        "m_max must be >= 2, got {m_max}"
                    )))
                } else {
                    Ok(())
                }
            }
            ToleranceStrategy::Decreasing { m_max } => {
                if m_max < 2 {
                    Err(RqiError::BadConfig(format!(
                        "m_max must be >= 2, got {m_max}"
                    )))
                } else {
                    Ok(())
                }
            }
            ToleranceStrategy::FixedSteps(m) => {
                if m < 2 {
                    Err(RqiError::BadConfig(format!(
                        "fixed step count must be >= 2, got {m}"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Label in the CLI's strategy syntax.
    pub fn label(&self) -> String {
        match self {
            ToleranceStrategy::Exact => "exact".into(),
            ToleranceStrategy::FixedXi { xi, .. } => format!("fixed-xi:{xi}"),
            ToleranceStrategy::Decreasing { .. } => "decreasing".into(),
            ToleranceStrategy::FixedSteps(m) => format!("steps:{m}"),
        }
    }
}

/// Choice of starting vector.
#[derive(Debug, Clone)]
pub enum InitialVector {
    /// Reference eigenvector plus a seeded random perturbation with the
    /// given angle sine.
    PerturbedReference {
        sin_phi0: f64,
    },
    /// Seeded uniform random direction.
    Random,
    Supplied(DenseVector),
}

/// Outer-iteration controls.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Stop when `||r_k|| <= ||A||_1 * tol`.
    pub tol: f64,
    pub max_outer: usize,
    pub seed: u64,
    pub initial: InitialVector,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tol: 1e-14,
            max_outer: 50,
            seed: 0,
            initial: InitialVector::Random,
        }
    }
}

/// Inner-solver selection for a run.
pub enum InnerSolver<'a> {
    /// Unpreconditioned Lanczos (or the dense solve under Exact).
    Plain,
    /// Tuned-preconditioned Lanczos; the base factor is built once per
    /// run and re-tuned with the current iterate at every outer step.
    Tuned(&'a BasePreconditioner),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    MaxOuterReached,
}

/// One recorded outer step: the iterate, and the inner solve performed
/// from it (absent on the final iterate).
#[derive(Debug, Clone)]
pub struct RunStep {
    pub iterate: OuterIterate,
    pub inner: Option<InnerSolveResult>,
}

/// Metadata identifying a run; carried into every serialized artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub matrix_id: String,
    pub n: usize,
    pub a_one_norm: f64,
    pub strategy: String,
    pub precond: String,
    pub seed: u64,
    pub tol: f64,
    pub sin_phi0: Option<f64>,
    pub termination: Termination,
    pub cumulative_inner: usize,
}

/// Full record of a run, vectors included. The diagnostics module
/// reduces this to scalar angle data against a spectral reference.
pub struct RunTrace {
    pub meta: RunMeta,
    pub steps: Vec<RunStep>,
}

impl RunTrace {
    pub fn r_norms(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.iterate.r_norm).collect()
    }
}

/// Rayleigh quotient `uᵀ A u` for a unit vector.
pub fn rayleigh_quotient(a: &SymmetricSparseMatrix, u: &[f64]) -> Result<f64, RqiError> {
    let norm = dense::norm2(u);
    if (norm - 1.0).abs() > 1e-8 {
        return Err(RqiError::NonUnitVector { norm });
    }
    let au = a.matvec(u)?;
    Ok(dense::dot(u, &au))
}

/// `||A u - theta u||` recomputed from scratch.
pub fn eigen_residual_norm(a: &SymmetricSparseMatrix, u: &[f64], theta: f64) -> f64 {
    let n = a.n();
    let mut au = vec![0.0; n];
    a.mul_into(u, &mut au);
    let mut sq = 0.0;
    for i in 0..n {
        let r = au[i] - theta * u[i];
        sq += r * r;
    }
    sq.sqrt()
}

fn fresh_iterate(a: &SymmetricSparseMatrix, u: DenseVector, k: usize) -> OuterIterate {
    let n = a.n();
    let mut au = vec![0.0; n];
    a.mul_into(&u, &mut au);
    let theta = dense::dot(&u, &au);
    let mut sq = 0.0;
    for i in 0..n {
        let r = au[i] - theta * u[i];
        sq += r * r;
    }
    OuterIterate {
        u,
        theta,
        r_norm: sq.sqrt(),
        k,
    }
}

/// Starting vector `x cos(phi0) + g sin(phi0)` with `g` a seeded random
/// unit vector orthogonal to the reference eigenvector. Deterministic
/// for a given seed; the achieved angle sine equals `sin_phi0`.
pub fn make_initial(
    reference: &SpectralReference,
    sin_phi0: f64,
    seed: u64,
) -> Result<DenseVector, RqiError> {
    if !(0.0..1.0).contains(&sin_phi0) {
        return Err(RqiError::BadConfig(format!(
            "sin_phi0 must be in [0, 1), got {sin_phi0}"
        )));
    }
    let x = &reference.x;
    if sin_phi0 == 0.0 {
        return Ok(x.clone());
    }
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Orthogonalize the random direction against x; one redraw pass is
    // enough in any realistic case.
    let g = loop {
        let raw: DenseVector = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coeff = dense::dot(&raw, x);
        let mut g = raw;
        dense::axpy(-coeff, x, &mut g);
        let coeff2 = dense::dot(&g, x);
        dense::axpy(-coeff2, x, &mut g);
        if dense::norm2(&g) > 1e-8 {
            break dense::normalize(&g).map_err(RqiError::Sparse)?;
        }
    };
    let cos_phi0 = (1.0 - sin_phi0 * sin_phi0).sqrt();
    let mut u0 = vec![0.0; n];
    dense::axpy(cos_phi0, x, &mut u0);
    dense::axpy(sin_phi0, &g, &mut u0);
    dense::normalize(&u0).map_err(RqiError::Sparse)
}

fn initial_vector(
    a: &SymmetricSparseMatrix,
    config: &RunConfig,
    reference: Option<&SpectralReference>,
) -> Result<DenseVector, RqiError> {
    match &config.initial {
        InitialVector::PerturbedReference { sin_phi0 } => {
            let reference = reference.ok_or(RqiError::MissingReference)?;
            make_initial(reference, *sin_phi0, config.seed)
        }
        InitialVector::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let raw: DenseVector = (0..a.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            dense::normalize(&raw).map_err(RqiError::Sparse)
        }
        InitialVector::Supplied(v) => dense::normalize(v).map_err(RqiError::Sparse),
    }
}

/// One outer step: solve the shifted system under the strategy, then
/// normalize and recompute the Rayleigh quotient and residual from
/// scratch.
pub fn rqi_step(
    a: &SymmetricSparseMatrix,
    iter: &OuterIterate,
    strategy: &ToleranceStrategy,
    solver: &InnerSolver<'_>,
    anorm: f64,
) -> Result<(OuterIterate, InnerSolveResult), RqiError> {
    let inner = match (strategy, solver) {
        (ToleranceStrategy::Exact, _) => exact_inner_solve(a, iter, anorm)?,
        (other, InnerSolver::Plain) => {
            let stop = stop_rule(other, iter, anorm);
            lanczos::inner_solve(a, iter.theta, &iter.u, stop)?
        }
        (other, InnerSolver::Tuned(base)) => {
            let stop = stop_rule(other, iter, anorm);
            let tp = precond::tune(base, a, &iter.u)?;
            precond::preconditioned_inner_solve(a, iter.theta, &iter.u, &tp, stop)?
        }
    };
    let wnorm = dense::norm2(&inner.w);
    if wnorm == 0.0 || !wnorm.is_finite() {
        return Err(RqiError::NullSolution);
    }
    let mut u_next = inner.w.clone();
    dense::scale(1.0 / wnorm, &mut u_next);
    let next = fresh_iterate(a, u_next, iter.k + 1);
    Ok((next, inner))
}

fn stop_rule(strategy: &ToleranceStrategy, iter: &OuterIterate, anorm: f64) -> InnerStop {
    match *strategy {
        ToleranceStrategy::Exact => unreachable!("exact strategy has no Lanczos stop rule"),
        ToleranceStrategy::FixedXi { xi, m_max } => InnerStop::TargetXi {
            xi_target: xi,
            m_max,
        },
        // The decreasing target is recomputed fresh each outer step.
        ToleranceStrategy::Decreasing { m_max } => InnerStop::TargetXi {
            xi_target: iter.r_norm / anorm,
            m_max,
        },
        ToleranceStrategy::FixedSteps(m) => InnerStop::FixedSteps(m),
    }
}

fn exact_inner_solve(
    a: &SymmetricSparseMatrix,
    iter: &OuterIterate,
    anorm: f64,
) -> Result<InnerSolveResult, RqiError> {
    let solved = match oracle::direct_shifted_solve(a, iter.theta, &iter.u) {
        Ok(w) => w,
        Err(crate::error::OracleError::SingularFactor { .. }) => {
            // theta hit an eigenvalue exactly; nudge the shift by an
            // epsilon of the matrix scale and retry once.
            oracle::direct_shifted_solve(a, iter.theta + 1e-14 * anorm.max(1.0), &iter.u)?
        }
        Err(e) => return Err(e.into()),
    };
    Ok(InnerSolveResult {
        w: solved,
        xi: 0.0,
        d: None,
        xi_hat: None,
        steps_used: 0,
        breakdown: lanczos::Breakdown::None,
    })
}

/// Runs the outer iteration until `||r_k|| <= ||A||_1 * tol` or
/// `max_outer` inner solves have been spent. Hitting the cap is a
/// recorded outcome, not an error.
pub fn run(
    a: &SymmetricSparseMatrix,
    config: &RunConfig,
    strategy: &ToleranceStrategy,
    solver: &InnerSolver<'_>,
    reference: Option<&SpectralReference>,
) -> Result<RunTrace, RqiError> {
    if config.tol <= 0.0 {
        return Err(RqiError::BadConfig(format!(
            "tol must be > 0, got {}",
            config.tol
        )));
    }
    strategy.validate()?;
    let anorm = a.one_norm();
    let u0 = initial_vector(a, config, reference)?;

    let mut steps: Vec<RunStep> = Vec::new();
    let mut cumulative_inner = 0usize;
    let mut current = fresh_iterate(a, u0, 0);
    let termination = loop {
        if current.r_norm <= anorm * config.tol {
            steps.push(RunStep {
                iterate: current,
                inner: None,
            });
            break Termination::Converged;
        }
        if steps.len() >= config.max_outer {
            steps.push(RunStep {
                iterate: current,
                inner: None,
            });
            break Termination::MaxOuterReached;
        }
        let (next, inner) = rqi_step(a, &current, strategy, solver, anorm)?;
        cumulative_inner += inner.steps_used;
        steps.push(RunStep {
            iterate: current,
            inner: Some(inner),
        });
        current = next;
    };

    let sin_phi0 = match &config.initial {
        InitialVector::PerturbedReference { sin_phi0 } => Some(*sin_phi0),
        _ => None,
    };
    Ok(RunTrace {
        meta: RunMeta {
            matrix_id: String::new(),
            n: a.n(),
            a_one_norm: anorm,
            strategy: strategy.label(),
            precond: match solver {
                InnerSolver::Plain => "none".into(),
                InnerSolver::Tuned(_) => "tuned".into(),
            },
            seed: config.seed,
            tol: config.tol,
            sin_phi0,
            termination,
            cumulative_inner,
        },
        steps,
    })
}
