//! Lanczos inner solver for the shifted systems `(A - theta I) w = u`.
//!
//! The factorization keeps a fully reorthogonalized basis (classical
//! Gram–Schmidt with one refinement pass), because the shifted systems
//! are indefinite and increasingly ill conditioned as the outer
//! iteration converges; a drifting basis would corrupt exactly the
//! residual directions the convergence theory depends on. For the same
//! reason the returned residual is always recomputed explicitly from
//! `u - (A - theta I) w`, never from a recurrence.
//!
//! The module is generic over the inner-product space so the tuned
//! preconditioner can reuse the same process with a different metric.

use crate::dense::{self, DenseVector};
use crate::error::LanczosError;
use crate::sparse::SymmetricSparseMatrix;

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Breakdown classification for an inner solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Breakdown {
    None,
    /// The projected tridiagonal solve needed a pivot floor.
    NearSingularProjected,
    /// The Krylov subspace became invariant; the projected solution is exact.
    HappyBreakdown,
}

/// The operator and inner product a Lanczos process runs in.
///
/// The unpreconditioned solver uses the Euclidean metric with the
/// shifted matrix; the tuned-preconditioned solver supplies
/// `op = Q⁻¹(A - theta I)` with the Q-inner product.
pub trait KrylovSpace {
    fn dim(&self) -> usize;
    /// out = operator * v
    fn apply_op(&self, v: &[f64], out: &mut [f64]);
    /// out = M v for the metric M of the inner product; identity by default.
    fn apply_metric(&self, v: &[f64], out: &mut [f64]) {
        out.copy_from_slice(v);
    }
    /// out = M⁻¹ v; identity by default.
    fn apply_metric_inverse(&self, v: &[f64], out: &mut [f64]) {
        out.copy_from_slice(v);
    }
    fn metric_is_identity(&self) -> bool {
        true
    }
    /// Magnitude scale for breakdown thresholds (the 1-norm of A).
    fn norm_scale(&self) -> f64;
}

/// Euclidean space with the operator `v -> (A - theta I) v`.
pub struct ShiftedOperator<'a> {
    a: &'a SymmetricSparseMatrix,
    theta: f64,
    anorm: f64,
}

impl<'a> ShiftedOperator<'a> {
    pub fn new(a: &'a SymmetricSparseMatrix, theta: f64) -> Self {
        let anorm = a.one_norm();
        Self { a, theta, anorm }
    }
}

impl KrylovSpace for ShiftedOperator<'_> {
    fn dim(&self) -> usize {
        self.a.n()
    }

    fn apply_op(&self, v: &[f64], out: &mut [f64]) {
        self.a.mul_into(v, out);
        for (o, vi) in out.iter_mut().zip(v) {
            *o -= self.theta * vi;
        }
    }

    fn norm_scale(&self) -> f64 {
        self.anorm
    }
}

/// Outcome of one Lanczos step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Continued,
    HappyBreakdown,
}

/// An m-step Lanczos factorization `Op V_m = V_m T_m + t_{m+1,m} v_{m+1} e_m*`.
///
/// `betas` has length m: the first m-1 entries are the off-diagonal of
/// T_m, the last is the trailing coefficient t_{m+1,m}. The basis holds
/// m vectors, plus v_{m+1} once a step completes without breakdown.
pub struct LanczosFactorization {
    basis: Vec<DenseVector>,
    alphas: Vec<f64>,
    betas: Vec<f64>,
    shift: f64,
    breakdown: bool,
}

impl LanczosFactorization {
    /// Starts a factorization from a vector of unit length in the
    /// driving space's metric.
    pub fn start(v1: DenseVector, shift: f64) -> Self {
        Self {
            basis: vec![v1],
            alphas: Vec::new(),
            betas: Vec::new(),
            shift,
            breakdown: false,
        }
    }

    pub fn steps(&self) -> usize {
        self.alphas.len()
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn basis(&self) -> &[DenseVector] {
        &self.basis
    }

    pub fn had_breakdown(&self) -> bool {
        self.breakdown
    }

    /// ⟨a, b⟩ in the space's metric. `mb` is scratch for M b.
    fn m_dot<S: KrylovSpace>(space: &S, a: &[f64], b: &[f64], scratch: &mut DenseVector) -> f64 {
        if space.metric_is_identity() {
            dense::dot(a, b)
        } else {
            space.apply_metric(b, scratch);
            dense::dot(a, scratch)
        }
    }

    fn m_norm<S: KrylovSpace>(
        space: &S,
        a: &[f64],
        scratch: &mut DenseVector,
        step: usize,
    ) -> Result<f64, LanczosError> {
        let sq = Self::m_dot(space, a, a, scratch);
        if sq < 0.0 {
            return Err(LanczosError::IndefiniteMetric { value: sq, step });
        }
        Ok(sq.sqrt())
    }

    /// One more Lanczos step: apply the operator, subtract the
    /// three-term recurrence, then orthogonalize against all previous
    /// basis vectors by classical Gram–Schmidt with one refinement pass
    /// when the norm drops below 1/sqrt(2) of its pre-orthogonalization
    /// value. Happy breakdown is a flag, not an error.
    pub fn extend<S: KrylovSpace>(&mut self, space: &S) -> Result<StepOutcome, LanczosError> {
        assert!(!self.breakdown, "cannot extend past a happy breakdown");
        let j = self.alphas.len();
        let n = space.dim();
        let mut s = vec![0.0; n];
        space.apply_op(&self.basis[j], &mut s);
        let mut scratch = vec![0.0; n];

        if j > 0 {
            dense::axpy(-self.betas[j - 1], &self.basis[j - 1], &mut s);
        }
        let mut alpha = Self::m_dot(space, &s, &self.basis[j], &mut scratch);
        dense::axpy(-alpha, &self.basis[j], &mut s);
        let norm_pre = Self::m_norm(space, &s, &mut scratch, j + 1)?;

        // Full reorthogonalization, one classical Gram-Schmidt pass.
        alpha += self.gram_schmidt_pass(space, &mut s, &mut scratch, j);
        let mut norm_post = Self::m_norm(space, &s, &mut scratch, j + 1)?;
        if norm_post < INV_SQRT2 * norm_pre {
            alpha += self.gram_schmidt_pass(space, &mut s, &mut scratch, j);
            norm_post = Self::m_norm(space, &s, &mut scratch, j + 1)?;
        }

        self.alphas.push(alpha);
        self.betas.push(norm_post);
        if norm_post <= 1e-14 * space.norm_scale() {
            self.breakdown = true;
            return Ok(StepOutcome::HappyBreakdown);
        }
        dense::scale(1.0 / norm_post, &mut s);
        self.basis.push(s);
        Ok(StepOutcome::Continued)
    }

    /// Subtracts the metric projections onto every basis vector from `s`
    /// and returns the coefficient against basis vector `j` (the alpha
    /// correction). One metric apply per pass.
    fn gram_schmidt_pass<S: KrylovSpace>(
        &self,
        space: &S,
        s: &mut DenseVector,
        scratch: &mut DenseVector,
        j: usize,
    ) -> f64 {
        let metric_s: &[f64] = if space.metric_is_identity() {
            s
        } else {
            space.apply_metric(s, scratch);
            scratch
        };
        let coeffs: Vec<f64> = self.basis.iter().map(|v| dense::dot(v, metric_s)).collect();
        for (v, &h) in self.basis.iter().zip(&coeffs) {
            dense::axpy(-h, v, s);
        }
        coeffs[j]
    }

    /// Solves the projected tridiagonal system `T_m y = e_1` by LDLᵀ
    /// with 1x1 and 2x2 pivots. A pivot at or below
    /// `1e-13 * ||T_m||_1` is floored to that threshold and reported
    /// through the returned flag; the solution is still delivered so
    /// the outer iteration can proceed through wildly inaccurate steps.
    pub fn solve_projected(&self) -> Result<(Vec<f64>, bool), LanczosError> {
        let m = self.alphas.len();
        if m < 2 {
            return Err(LanczosError::ProjectedUndefined { m });
        }
        let mut e1 = vec![0.0; m];
        e1[0] = 1.0;
        Ok(solve_tridiagonal_indefinite(
            &self.alphas,
            &self.betas[..m - 1],
            &e1,
        ))
    }
}

/// LDLᵀ with 2x2 pivots (Bunch-style) for a symmetric tridiagonal
/// system `T y = b`. Returns the solution and whether any pivot was
/// floored because it sat at or below `1e-13 * ||T||_1`.
pub(crate) fn solve_tridiagonal_indefinite(
    diag: &[f64],
    off: &[f64],
    b: &[f64],
) -> (Vec<f64>, bool) {
    let m = diag.len();
    debug_assert_eq!(off.len(), m - 1);
    debug_assert_eq!(b.len(), m);

    let mut t_norm1 = 0.0f64;
    for i in 0..m {
        let mut col = diag[i].abs();
        if i > 0 {
            col += off[i - 1].abs();
        }
        if i + 1 < m {
            col += off[i].abs();
        }
        t_norm1 = t_norm1.max(col);
    }
    // Pivots at or below the flag threshold mark the system as near
    // singular; they are still used honestly unless they are so small
    // that the division itself would be meaningless. Replacing
    // legitimately tiny pivots would silently destroy the Galerkin
    // property of the returned solution, which the outer iteration
    // depends on near convergence.
    let flag_floor = 1e-13 * t_norm1;
    let replace_floor = f64::EPSILON * f64::EPSILON * t_norm1.max(f64::MIN_POSITIVE);
    // Bunch's 1x1-vs-2x2 criterion constant for tridiagonals.
    let kappa = (5.0f64.sqrt() - 1.0) / 2.0;
    let sigma = t_norm1.max(f64::MIN_POSITIVE);

    enum Block {
        One {
            piv: f64,
            mult: f64,
        },
        Two {
            d0: f64,
            e: f64,
            d1: f64,
            det: f64,
            m1: f64,
            m2: f64,
        },
    }

    let mut d: Vec<f64> = diag.to_vec();
    let mut singular = false;
    let mut blocks: Vec<(usize, Block)> = Vec::with_capacity(m);

    let mut i = 0;
    while i < m {
        let last = i + 1 >= m;
        if last || sigma * d[i].abs() >= kappa * off[i] * off[i] {
            let mut piv = d[i];
            if piv.abs() <= flag_floor {
                singular = true;
                if piv.abs() <= replace_floor {
                    piv = if piv < 0.0 {
                        -replace_floor
                    } else {
                        replace_floor
                    };
                }
            }
            let mut mult = 0.0;
            if !last {
                mult = off[i] / piv;
                d[i + 1] -= mult * off[i];
            }
            blocks.push((i, Block::One { piv, mult }));
            i += 1;
        } else {
            let d0 = d[i];
            let e = off[i];
            let d1 = d[i + 1];
            let mut det = d0 * d1 - e * e;
            let blk_scale = d0.abs().max(e.abs()).max(d1.abs()).max(flag_floor);
            if det.abs() <= flag_floor * blk_scale {
                singular = true;
                if det.abs() <= replace_floor * blk_scale {
                    let mag = (replace_floor * blk_scale).max(f64::MIN_POSITIVE);
                    det = if det < 0.0 { -mag } else { mag };
                }
            }
            let (mut m1, mut m2) = (0.0, 0.0);
            if i + 2 < m {
                // Row i+2 couples to the block only through off[i+1].
                m1 = -off[i + 1] * e / det;
                m2 = off[i + 1] * d0 / det;
                d[i + 2] -= m2 * off[i + 1];
            }
            blocks.push((
                i,
                Block::Two {
                    d0,
                    e,
                    d1,
                    det,
                    m1,
                    m2,
                },
            ));
            i += 2;
        }
    }

    // Forward substitution L z = b.
    let mut y = b.to_vec();
    for (i, blk) in &blocks {
        let i = *i;
        match blk {
            Block::One { mult, .. } => {
                if i + 1 < m {
                    y[i + 1] -= mult * y[i];
                }
            }
            Block::Two { m1, m2, .. } => {
                if i + 2 < m {
                    y[i + 2] -= m1 * y[i] + m2 * y[i + 1];
                }
            }
        }
    }
    // Block-diagonal solve.
    for (i, blk) in &blocks {
        let i = *i;
        match blk {
            Block::One { piv, .. } => y[i] /= piv,
            Block::Two { d0, e, d1, det, .. } => {
                let (b0, b1) = (y[i], y[i + 1]);
                y[i] = (d1 * b0 - e * b1) / det;
                y[i + 1] = (-e * b0 + d0 * b1) / det;
            }
        }
    }
    // Backward substitution Lᵀ y = z.
    for (i, blk) in blocks.iter().rev() {
        let i = *i;
        match blk {
            Block::One { mult, .. } => {
                if i + 1 < m {
                    y[i] -= mult * y[i + 1];
                }
            }
            Block::Two { m1, m2, .. } => {
                if i + 2 < m {
                    y[i] -= m1 * y[i + 2];
                    y[i + 1] -= m2 * y[i + 2];
                }
            }
        }
    }
    (y, singular)
}

/// Stopping rule for an inner solve.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum InnerStop {
    /// Iterate until the explicitly computed relative residual drops to
    /// `xi_target`, or `m_max` Lanczos steps have been taken.
    TargetXi { xi_target: f64, m_max: usize },
    /// Run exactly `m` steps regardless of the residual.
    FixedSteps(usize),
}

/// Result of one inner solve of `(A - theta I) w = u`.
///
/// The residual convention follows `(A - theta I) w = u + xi * d` with
/// `xi * d` recomputed explicitly from the final `w`. `d` is `None`
/// when the residual vanished exactly (direction undefined).
#[derive(Debug, Clone)]
pub struct InnerSolveResult {
    pub w: DenseVector,
    pub xi: f64,
    pub d: Option<DenseVector>,
    /// Residual norm of the preconditioned system, when one was used.
    pub xi_hat: Option<f64>,
    pub steps_used: usize,
    pub breakdown: Breakdown,
}

/// Everything the generic driver needs: the space the process runs in,
/// plus the original system for explicit residuals.
pub(crate) struct SolveSetup<'a, S: KrylovSpace> {
    pub space: &'a S,
    pub a: &'a SymmetricSparseMatrix,
    pub theta: f64,
    pub u: &'a [f64],
    /// Start vector, unit length in the space's metric.
    pub start: DenseVector,
    /// The projected right-hand side is `rhs_scale * e_1`.
    pub rhs_scale: f64,
}

/// Solves `(A - theta I) w = u` with the unpreconditioned Lanczos
/// method. `u` must have unit norm (it is the relative-residual scale).
pub fn inner_solve(
    a: &SymmetricSparseMatrix,
    theta: f64,
    u: &[f64],
    stop: InnerStop,
) -> Result<InnerSolveResult, LanczosError> {
    let nrm = dense::norm2(u);
    if (nrm - 1.0).abs() > 1e-8 {
        return Err(LanczosError::NonUnitRhs { norm: nrm });
    }
    let space = ShiftedOperator::new(a, theta);
    drive_inner_solve(
        SolveSetup {
            space: &space,
            a,
            theta,
            u,
            start: u.to_vec(),
            rhs_scale: 1.0,
        },
        stop,
    )
}

/// Shared driver for the unpreconditioned and preconditioned solves.
pub(crate) fn drive_inner_solve<S: KrylovSpace>(
    setup: SolveSetup<'_, S>,
    stop: InnerStop,
) -> Result<InnerSolveResult, LanczosError> {
    let mut fact = LanczosFactorization::start(setup.start.clone(), setup.theta);
    let (target, m_cap) = match stop {
        InnerStop::TargetXi { xi_target, m_max } => (Some(xi_target), m_max.max(2)),
        InnerStop::FixedSteps(m) => (None, m),
    };

    loop {
        let outcome = fact.extend(setup.space)?;
        let m = fact.steps();

        if outcome == StepOutcome::HappyBreakdown {
            return finalize(&setup, &fact, Breakdown::HappyBreakdown);
        }
        if m >= m_cap {
            return finalize(&setup, &fact, Breakdown::None);
        }
        if let Some(xi_target) = target {
            if m >= 2 {
                let (w, _) = assemble_w(&setup, &fact)?;
                let xi = explicit_xi(&setup, &w);
                if xi <= xi_target {
                    return finalize(&setup, &fact, Breakdown::None);
                }
            }
        }
    }
}

/// Norm of the explicit residual `u - (A - theta I) w`.
fn explicit_xi<S: KrylovSpace>(setup: &SolveSetup<'_, S>, w: &[f64]) -> f64 {
    let n = setup.a.n();
    let mut aw = vec![0.0; n];
    setup.a.mul_into(w, &mut aw);
    let mut sq = 0.0;
    for i in 0..n {
        let r = setup.u[i] - (aw[i] - setup.theta * w[i]);
        sq += r * r;
    }
    sq.sqrt()
}

fn assemble_w<S: KrylovSpace>(
    setup: &SolveSetup<'_, S>,
    fact: &LanczosFactorization,
) -> Result<(DenseVector, bool), LanczosError> {
    let m = fact.steps();
    let n = setup.a.n();
    let (y, near_singular) = projected_solution(fact, setup.space.norm_scale())?;
    let mut w = vec![0.0; n];
    for (yi, v) in y.iter().zip(fact.basis().iter().take(m)) {
        dense::axpy(setup.rhs_scale * yi, v, &mut w);
    }
    Ok((w, near_singular))
}

/// Projected solve, including the m = 1 happy-breakdown special case
/// where T_1 = [alpha_1] and the Krylov space is already invariant.
fn projected_solution(
    fact: &LanczosFactorization,
    scale: f64,
) -> Result<(Vec<f64>, bool), LanczosError> {
    if fact.steps() == 1 && fact.had_breakdown() {
        // Exact solve implied by an invariant one-dimensional space.
        let alpha = fact.alphas()[0];
        let flag_floor = 1e-13 * scale.max(f64::MIN_POSITIVE);
        if alpha.abs() <= flag_floor {
            let replace = f64::EPSILON * f64::EPSILON * scale.max(f64::MIN_POSITIVE);
            let piv = if alpha.abs() <= replace {
                if alpha < 0.0 {
                    -replace
                } else {
                    replace
                }
            } else {
                alpha
            };
            return Ok((vec![1.0 / piv], true));
        }
        return Ok((vec![1.0 / alpha], false));
    }
    fact.solve_projected()
}

fn finalize<S: KrylovSpace>(
    setup: &SolveSetup<'_, S>,
    fact: &LanczosFactorization,
    breakdown: Breakdown,
) -> Result<InnerSolveResult, LanczosError> {
    let (w, near_singular) = assemble_w(setup, fact)?;
    let n = setup.a.n();
    let mut aw = vec![0.0; n];
    setup.a.mul_into(&w, &mut aw);
    // Residual direction follows (A - theta I) w = u + xi d.
    let mut resdir = vec![0.0; n];
    for i in 0..n {
        resdir[i] = (aw[i] - setup.theta * w[i]) - setup.u[i];
    }
    let xi = dense::norm2(&resdir);
    let d = if xi > 0.0 {
        dense::scale(1.0 / xi, &mut resdir);
        Some(resdir.clone())
    } else {
        None
    };
    let xi_hat = if setup.space.metric_is_identity() || xi == 0.0 {
        None
    } else {
        // xi_hat = ||L⁻¹ (residual)|| = sqrt(resᵀ Q⁻¹ res).
        let mut qinv_res = vec![0.0; n];
        let full_res: Vec<f64> = resdir.iter().map(|v| v * xi).collect();
        setup.space.apply_metric_inverse(&full_res, &mut qinv_res);
        Some(dense::dot(&full_res, &qinv_res).max(0.0).sqrt())
    };
    let flag = if breakdown == Breakdown::HappyBreakdown {
        Breakdown::HappyBreakdown
    } else if near_singular {
        Breakdown::NearSingularProjected
    } else {
        Breakdown::None
    };
    Ok(InnerSolveResult {
        w,
        xi,
        d,
        xi_hat,
        steps_used: fact.steps(),
        breakdown: flag,
    })
}
