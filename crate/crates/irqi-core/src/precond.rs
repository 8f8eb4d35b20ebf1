//! Tuned preconditioning for the shifted inner systems.
//!
//! A positive definite base `Q = L Lᵀ` is built once per run from an
//! incomplete (or exact) Cholesky factorization of `A - sigma I`, with
//! a diagonal shift escalated until all pivots are acceptable. At every
//! outer step the base is re-tuned by the rank-1 modification
//! `𝒬 = Q + w wᵀ / (wᵀ u)` with `w = (A - Q) u`, which enforces
//! `𝒬 u = A u` and so preserves the right-hand side's richness in the
//! wanted eigenvector.
//!
//! The preconditioned operator `ℒ⁻¹ (A - theta I) ℒ⁻ᵀ` is never formed;
//! the Lanczos process instead runs on `𝒬⁻¹ (A - theta I)` in the
//! 𝒬-inner product, which has the identical spectrum and Galerkin
//! conditions, with `𝒬⁻¹` applied through Sherman–Morrison on top of
//! the triangular solves.

use crate::dense::{self, DenseVector};
use crate::error::{LanczosError, PrecondError};
use crate::lanczos::{drive_inner_solve, InnerSolveResult, InnerStop, KrylovSpace, SolveSetup};
use crate::sparse::SymmetricSparseMatrix;

/// Sparse lower-triangular factor in CSR, diagonal stored last per row.
#[derive(Debug, Clone)]
pub struct LowerFactor {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl LowerFactor {
    fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    fn diag(&self, i: usize) -> f64 {
        self.values[self.row_offsets[i + 1] - 1]
    }

    /// Forward substitution `L y = b`.
    pub fn solve_lower(&self, b: &[f64]) -> DenseVector {
        let mut y = b.to_vec();
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut acc = y[i];
            for (&j, &v) in cols.iter().zip(vals) {
                if j < i {
                    acc -= v * y[j];
                }
            }
            y[i] = acc / self.diag(i);
        }
        y
    }

    /// Backward substitution `Lᵀ y = b`.
    pub fn solve_lower_transpose(&self, b: &[f64]) -> DenseVector {
        let mut y = b.to_vec();
        for i in (0..self.n).rev() {
            y[i] /= self.diag(i);
            let yi = y[i];
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j < i {
                    y[j] -= v * yi;
                }
            }
        }
        y
    }

    /// y = L x
    pub fn mul_lower(&self, x: &[f64]) -> DenseVector {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
        y
    }

    /// y = Lᵀ x
    pub fn mul_lower_transpose(&self, x: &[f64]) -> DenseVector {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += v * x[i];
            }
        }
        y
    }
}

/// Sparsity policy for the base factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillPolicy {
    /// Zero-fill incomplete Cholesky on the pattern of `A - sigma I`.
    Ic0,
    /// Exact dense Cholesky, compressed back to its sparse lower factor.
    Full,
}

/// Positive definite base preconditioner `Q = L Lᵀ ≈ A - sigma I`.
#[derive(Debug, Clone)]
pub struct BasePreconditioner {
    l: LowerFactor,
    /// Diagonal shift that was required to push all pivots positive.
    pub shift_used: f64,
    pub source_sigma: f64,
    anorm: f64,
}

impl BasePreconditioner {
    /// Q x = L (Lᵀ x)
    pub fn apply(&self, x: &[f64]) -> DenseVector {
        self.l.mul_lower(&self.l.mul_lower_transpose(x))
    }

    /// Q⁻¹ x via two triangular solves.
    pub fn apply_inverse(&self, x: &[f64]) -> DenseVector {
        self.l.solve_lower_transpose(&self.l.solve_lower(x))
    }

    pub fn factor(&self) -> &LowerFactor {
        &self.l
    }
}

/// Builds the base preconditioner from `A - sigma I + alpha I`, with
/// `alpha` starting at zero and escalating by doubling (from a floor of
/// `1e-3 ||A||_1`) until every pivot clears `1e-12 ||A||_1`.
pub fn build_base(
    a: &SymmetricSparseMatrix,
    sigma: f64,
    fill_policy: FillPolicy,
) -> Result<BasePreconditioner, PrecondError> {
    let anorm = a.one_norm();
    let shifted = a.add_shifted_identity(-sigma);
    let pivot_floor = 1e-12 * anorm;
    // A shift beyond sigma - lambda_min can never be needed; twice the
    // matrix scale plus |sigma| is a safe runaway guard that still
    // admits matrices whose smallest eigenvalue is -||A||_1.
    let alpha_cap = 2.0 * (anorm + sigma.abs()).max(1.0);

    let mut alpha = 0.0f64;
    loop {
        let attempt = match fill_policy {
            FillPolicy::Ic0 => ic0_factor(&shifted, alpha, pivot_floor),
            FillPolicy::Full => dense_cholesky(&shifted, alpha, pivot_floor),
        };
        if let Some(l) = attempt {
            return Ok(BasePreconditioner {
                l,
                shift_used: alpha,
                source_sigma: sigma,
                anorm,
            });
        }
        alpha = (2.0 * alpha).max(1e-3 * anorm.max(f64::MIN_POSITIVE));
        if alpha > alpha_cap {
            return Err(PrecondError::ShiftEscalationFailed { alpha });
        }
    }
}

/// One IC(0) attempt on the lower-triangle pattern of `m` with `alpha`
/// added to the diagonal. Returns None when a pivot falls at or below
/// the floor.
fn ic0_factor(m: &SymmetricSparseMatrix, alpha: f64, pivot_floor: f64) -> Option<LowerFactor> {
    let n = m.n();
    let mut row_offsets = vec![0usize; n + 1];
    let mut col_indices = Vec::new();
    let mut values = Vec::new();

    // Dense scatter of the current row's computed L entries.
    let mut lrow = vec![0.0f64; n];
    // row_offsets/col_indices are filled incrementally so finished rows
    // of L can be read back while factoring row i.
    for i in 0..n {
        let (cols, vals) = m.row(i);
        let mut pattern: Vec<(usize, f64)> = cols
            .iter()
            .zip(vals)
            .filter(|(&j, _)| j <= i)
            .map(|(&j, &v)| (j, if j == i { v + alpha } else { v }))
            .collect();
        pattern.sort_by_key(|&(j, _)| j);

        let mut ok = true;
        for &(j, mij) in &pattern {
            // s = M[i,j] - sum_{p<j} L[i,p] * L[j,p], restricted to the
            // stored pattern of row j.
            let mut s = mij;
            let lo = row_offsets[j];
            let hi = if j < i { row_offsets[j + 1] } else { 0 };
            if j < i {
                for idx in lo..hi {
                    let p = col_indices[idx];
                    if p < j {
                        s -= lrow[p] * values[idx];
                    }
                }
                lrow[j] = s / values[hi - 1];
            } else {
                // Diagonal: subtract the squares of the computed row.
                let mut acc = s;
                for &(p, _) in pattern.iter() {
                    if p < i {
                        acc -= lrow[p] * lrow[p];
                    }
                }
                if acc <= pivot_floor {
                    ok = false;
                    break;
                }
                lrow[i] = acc.sqrt();
            }
        }
        if !ok {
            // Reset scatter and give up on this alpha.
            for &(j, _) in &pattern {
                lrow[j] = 0.0;
            }
            return None;
        }
        for &(j, _) in &pattern {
            col_indices.push(j);
            values.push(lrow[j]);
            lrow[j] = 0.0;
        }
        row_offsets[i + 1] = col_indices.len();
    }
    Some(LowerFactor {
        n,
        row_offsets,
        col_indices,
        values,
    })
}

/// Exact dense Cholesky of `m + alpha I`, compressed to a sparse lower
/// factor (exact zeros dropped). Intended for small orders.
fn dense_cholesky(m: &SymmetricSparseMatrix, alpha: f64, pivot_floor: f64) -> Option<LowerFactor> {
    let n = m.n();
    let mut dense = vec![0.0f64; n * n];
    for i in 0..n {
        let (cols, vals) = m.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if j <= i {
                dense[i * n + j] = if i == j { v + alpha } else { v };
            }
        }
    }
    for j in 0..n {
        let mut s = dense[j * n + j];
        for p in 0..j {
            s -= dense[j * n + p] * dense[j * n + p];
        }
        if s <= pivot_floor {
            return None;
        }
        let ljj = s.sqrt();
        dense[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut v = dense[i * n + j];
            for p in 0..j {
                v -= dense[i * n + p] * dense[j * n + p];
            }
            dense[i * n + j] = v / ljj;
        }
    }
    let mut row_offsets = vec![0usize; n + 1];
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    for i in 0..n {
        for j in 0..=i {
            let v = dense[i * n + j];
            if v != 0.0 || i == j {
                col_indices.push(j);
                values.push(v);
            }
        }
        row_offsets[i + 1] = col_indices.len();
    }
    Some(LowerFactor {
        n,
        row_offsets,
        col_indices,
        values,
    })
}

/// The rank-1 tuned preconditioner `𝒬 = Q + w wᵀ / denom` with
/// `w = (A - Q) u` and `denom = wᵀ u`, so that `𝒬 u = A u`.
///
/// When the denominator is degenerate the tuning degrades gracefully to
/// the untuned base (`𝒬 = Q`) and `is_tuned()` reports it.
pub struct TunedPreconditioner<'a> {
    base: &'a BasePreconditioner,
    u: DenseVector,
    w_vec: DenseVector,
    denom: f64,
    tuned: bool,
    /// Cached Q⁻¹ w and the Sherman–Morrison denominator.
    qinv_w: DenseVector,
    sm_denom: f64,
}

/// Tunes the base preconditioner for the current iterate. Never fails;
/// a degenerate `wᵀu` falls back to the untuned base.
pub fn tune<'a>(
    base: &'a BasePreconditioner,
    a: &SymmetricSparseMatrix,
    u: &[f64],
) -> Result<TunedPreconditioner<'a>, PrecondError> {
    let au = a.matvec(u)?;
    let qu = base.apply(u);
    let w_vec = dense::sub(&au, &qu);
    let denom = dense::dot(&w_vec, u);
    let wnorm = dense::norm2(&w_vec);
    // Tuning is skipped when w is roundoff noise (Q already satisfies
    // Qu = Au to working precision) or when the denominator degenerates.
    let tuned = wnorm > 1e-14 * base.anorm && denom.abs() > 1e-13 * base.anorm * wnorm;
    let (qinv_w, sm_denom) = if tuned {
        let qinv_w = base.apply_inverse(&w_vec);
        let sm = denom + dense::dot(&w_vec, &qinv_w);
        (qinv_w, sm)
    } else {
        (vec![0.0; u.len()], 1.0)
    };
    Ok(TunedPreconditioner {
        base,
        u: u.to_vec(),
        w_vec,
        denom,
        tuned,
        qinv_w,
        sm_denom,
    })
}

impl TunedPreconditioner<'_> {
    /// Constructs the degraded (untuned) form directly; `𝒬 = Q`.
    pub fn untuned<'a>(base: &'a BasePreconditioner, u: &[f64]) -> TunedPreconditioner<'a> {
        TunedPreconditioner {
            base,
            u: u.to_vec(),
            w_vec: vec![0.0; u.len()],
            denom: 0.0,
            tuned: false,
            qinv_w: vec![0.0; u.len()],
            sm_denom: 1.0,
        }
    }

    pub fn is_tuned(&self) -> bool {
        self.tuned
    }

    pub fn tuning_vector(&self) -> &[f64] {
        &self.w_vec
    }

    pub fn denom(&self) -> f64 {
        self.denom
    }

    /// 𝒬 x
    pub fn apply(&self, x: &[f64]) -> DenseVector {
        let mut y = self.base.apply(x);
        if self.tuned {
            let coeff = dense::dot(&self.w_vec, x) / self.denom;
            dense::axpy(coeff, &self.w_vec, &mut y);
        }
        y
    }

    /// 𝒬⁻¹ x via Sherman–Morrison over the triangular solves.
    pub fn apply_inverse(&self, x: &[f64]) -> Result<DenseVector, PrecondError> {
        let mut y = self.base.apply_inverse(x);
        if self.tuned {
            let guard =
                1e-14 * (self.denom.abs() + dense::norm2(&self.w_vec) * dense::norm2(&self.qinv_w));
            if self.sm_denom == 0.0 || self.sm_denom.abs() <= guard {
                return Err(PrecondError::TunedSingular {
                    value: self.sm_denom,
                });
            }
            let coeff = dense::dot(&self.w_vec, &y) / self.sm_denom;
            dense::axpy(-coeff, &self.qinv_w, &mut y);
        }
        Ok(y)
    }
}

/// Krylov space for the preconditioned solve: operator
/// `𝒬⁻¹ (A - theta I)` under the 𝒬-inner product.
struct TunedSpace<'a, 'b> {
    a: &'a SymmetricSparseMatrix,
    theta: f64,
    tp: &'a TunedPreconditioner<'b>,
    anorm: f64,
}

impl KrylovSpace for TunedSpace<'_, '_> {
    fn dim(&self) -> usize {
        self.a.n()
    }

    fn apply_op(&self, v: &[f64], out: &mut [f64]) {
        let n = self.a.n();
        let mut s = vec![0.0; n];
        self.a.mul_into(v, &mut s);
        for i in 0..n {
            s[i] -= self.theta * v[i];
        }
        let y = self
            .tp
            .apply_inverse(&s)
            .expect("singular tuned preconditioner during operator apply");
        out.copy_from_slice(&y);
    }

    fn apply_metric(&self, v: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.tp.apply(v));
    }

    fn apply_metric_inverse(&self, v: &[f64], out: &mut [f64]) {
        let y = self
            .tp
            .apply_inverse(v)
            .expect("singular tuned preconditioner during metric apply");
        out.copy_from_slice(&y);
    }

    fn metric_is_identity(&self) -> bool {
        false
    }

    fn norm_scale(&self) -> f64 {
        self.anorm
    }
}

/// Preconditioned inner solve of `(A - theta I) w = u`.
///
/// The returned `xi` and `d` are the unpreconditioned residual data
/// recomputed explicitly from `w`; `xi_hat` additionally reports the
/// preconditioned residual norm.
pub fn preconditioned_inner_solve(
    a: &SymmetricSparseMatrix,
    theta: f64,
    u: &[f64],
    tp: &TunedPreconditioner<'_>,
    stop: InnerStop,
) -> Result<InnerSolveResult, LanczosError> {
    debug_assert_eq!(tp.u.len(), u.len(), "preconditioner tuned for another size");
    let nrm = dense::norm2(u);
    if (nrm - 1.0).abs() > 1e-8 {
        return Err(LanczosError::NonUnitRhs { norm: nrm });
    }
    let anorm = a.one_norm();
    let space = TunedSpace {
        a,
        theta,
        tp,
        anorm,
    };

    // Start vector 𝒬⁻¹u normalized in the 𝒬-norm; its norm is also the
    // projected right-hand side magnitude ||L⁻¹ u||.
    let z_raw = tp
        .apply_inverse(u)
        .expect("singular tuned preconditioner on the right-hand side");
    let bhat_sq = dense::dot(u, &z_raw);
    if bhat_sq <= 0.0 {
        return Err(LanczosError::IndefiniteMetric {
            value: bhat_sq,
            step: 0,
        });
    }
    let bhat = bhat_sq.sqrt();
    let mut start = z_raw;
    dense::scale(1.0 / bhat, &mut start);

    drive_inner_solve(
        SolveSetup {
            space: &space,
            a,
            theta,
            u,
            start,
            rhs_scale: bhat,
        },
        stop,
    )
}
