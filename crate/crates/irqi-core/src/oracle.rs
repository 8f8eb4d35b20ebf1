//! Dense reference eigensolver and direct shifted solver.
//!
//! Everything here is self-contained and auditable: Householder
//! tridiagonalization followed by implicit-shift QL for the full
//! eigendecomposition, and a Bunch–Kaufman LDLᵀ for the shifted
//! (indefinite) solves of exact RQI. The other modules treat these
//! results as ground truth, so no external library is involved.

use serde::{Deserialize, Serialize};

use crate::dense::DenseVector;
use crate::error::OracleError;
use crate::sparse::SymmetricSparseMatrix;

/// Largest order accepted for densification. Covers the usual test
/// corpus (order up to ~3500) with headroom.
pub const DENSIFY_CAP: usize = 5000;

/// Oracle-computed spectral data for a target eigenpair.
///
/// `lambda` is the eigenvalue closest to `sigma`, `lambda2` the one with
/// the second-smallest distance to `sigma`, and
/// `beta = (lambda_max - lambda_min) / |lambda2 - lambda|`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralReference {
    pub n: usize,
    pub sigma: f64,
    pub lambda: f64,
    pub x: DenseVector,
    pub lambda2: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub beta: f64,
    /// 1-norm of the matrix the reference was computed from; used to
    /// detect reference/matrix mismatches downstream.
    pub a_one_norm: f64,
}

impl SpectralReference {
    /// Spectrum spread over eigenvalue gap, recomputed from the fields.
    pub fn gap(&self) -> f64 {
        (self.lambda2 - self.lambda).abs()
    }

    pub fn spread(&self) -> f64 {
        self.lambda_max - self.lambda_min
    }
}

fn densify(a: &SymmetricSparseMatrix) -> Vec<f64> {
    let n = a.n();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            m[i * n + j] = v;
        }
    }
    m
}

/// Full eigendecomposition of a sparse symmetric matrix after
/// densification. Eigenvalues ascending, eigenvectors orthonormal.
pub fn dense_eigendecomposition(
    a: &SymmetricSparseMatrix,
) -> Result<Vec<(f64, DenseVector)>, OracleError> {
    let n = a.n();
    if n > DENSIFY_CAP {
        return Err(OracleError::CapExceeded {
            n,
            cap: DENSIFY_CAP,
        });
    }
    let mut v = densify(a);
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut v, &mut d, &mut e);
    tql2(n, &mut v, &mut d, &mut e)?;
    // v holds eigenvectors in columns; unpack sorted ascending (tql2 sorts).
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let vec: DenseVector = (0..n).map(|i| v[i * n + j]).collect();
        out.push((d[j], vec));
    }
    Ok(out)
}

/// Householder reduction to tridiagonal form with accumulation of the
/// orthogonal transformation, derived from the Algol tred2 procedure
/// (Bowdler, Martin, Reinsch, Wilkinson) via EISPACK.
fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    if n == 0 {
        return;
    }
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for item in d.iter().take(i) {
            scale += item.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
                v[j * n + i] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }

            for j in 0..i {
                f = d[j];
                v[j * n + i] = f;
                g = e[j] + v[j * n + j] * f;
                for k in (j + 1)..i {
                    g += v[k * n + j] * d[k];
                    e[k] += v[k * n + j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k * n + j] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
            }
        }
        d[i] = h;
    }

    // Accumulate transformations.
    for i in 0..(n - 1) {
        v[(n - 1) * n + i] = v[i * n + i];
        v[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k * n + (i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k * n + (i + 1)] * v[k * n + j];
                }
                for k in 0..=i {
                    v[k * n + j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k * n + (i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
        v[(n - 1) * n + j] = 0.0;
    }
    v[(n - 1) * n + (n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit-shift QL iteration on the tridiagonal returned by `tred2`,
/// accumulating eigenvectors into `v`. Sorts ascending at the end.
fn tql2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<(), OracleError> {
    if n == 0 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let eps = f64::EPSILON;
    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l && m < n {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 64 {
                    return Err(OracleError::NoConvergence { index: l });
                }
                // Shift.
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                // Implicit QL sweep.
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[k * n + (i + 1)];
                        v[k * n + (i + 1)] = s * v[k * n + i] + c * h;
                        v[k * n + i] = c * v[k * n + i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    // Sort eigenvalues ascending, carrying eigenvector columns along.
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for j in (i + 1)..n {
            if d[j] < p {
                k = j;
                p = d[j];
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            for row in 0..n {
                v.swap(row * n + i, row * n + k);
            }
        }
    }
    Ok(())
}

/// Builds the spectral reference for the eigenvalue closest to `sigma`.
pub fn spectral_reference(
    a: &SymmetricSparseMatrix,
    sigma: f64,
) -> Result<SpectralReference, OracleError> {
    let pairs = dense_eigendecomposition(a)?;
    let n = a.n();
    let anorm = a.one_norm();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| {
        (pairs[p].0 - sigma)
            .abs()
            .partial_cmp(&(pairs[q].0 - sigma).abs())
            .unwrap()
    });
    let target = order[0];
    let second = order[1];
    let lambda = pairs[target].0;
    let lambda2 = pairs[second].0;
    let gap = (lambda2 - lambda).abs();
    if gap <= 1e-12 * anorm {
        return Err(OracleError::NotSimple { gap });
    }
    let lambda_min = pairs[0].0;
    let lambda_max = pairs[n - 1].0;
    let x = pairs[target].1.clone();
    Ok(SpectralReference {
        n,
        sigma,
        lambda,
        x,
        lambda2,
        lambda_min,
        lambda_max,
        beta: (lambda_max - lambda_min) / gap,
        a_one_norm: anorm,
    })
}

/// Default target below the spectrum for smallest-eigenpair runs:
/// Gershgorin lower bound minus one.
pub fn default_smallest_sigma(a: &SymmetricSparseMatrix) -> f64 {
    a.gershgorin_lower_bound() - 1.0
}

/// Encoded Bunch–Kaufman pivoting actions, one per column.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Pivot {
    /// 1x1 pivot; payload is the row interchanged with this one.
    Single(usize),
    /// Start of a 2x2 pivot block; payload is the row interchanged
    /// with row k+1.
    Pair(usize),
    /// Second column of a 2x2 block.
    PairTail,
}

/// Dense LDLᵀ with Bunch–Kaufman partial pivoting, lower storage.
struct LdltFactor {
    n: usize,
    a: Vec<f64>,
    pivots: Vec<Pivot>,
}

// Bunch-Kaufman constant (1 + sqrt(17)) / 8.
const BK_ALPHA: f64 = 0.640_388_203_202_208_4;

fn ldlt_factor(n: usize, mut a: Vec<f64>) -> Result<LdltFactor, OracleError> {
    let mut pivots = vec![Pivot::Single(0); n];
    let at = |a: &Vec<f64>, i: usize, j: usize| a[i * n + j];

    let mut k = 0;
    while k < n {
        let absakk = at(&a, k, k).abs();
        let (imax, colmax) = if k + 1 < n {
            let mut best = k + 1;
            let mut bestv = at(&a, k + 1, k).abs();
            for i in (k + 2)..n {
                let v = at(&a, i, k).abs();
                if v > bestv {
                    best = i;
                    bestv = v;
                }
            }
            (best, bestv)
        } else {
            (k, 0.0)
        };

        if absakk.max(colmax) == 0.0 {
            return Err(OracleError::SingularFactor { pivot: 0.0 });
        }

        let (kp, kstep) = if absakk >= BK_ALPHA * colmax {
            (k, 1)
        } else {
            // Largest off-diagonal magnitude in row/column imax.
            let mut rowmax = 0.0f64;
            for j in k..imax {
                rowmax = rowmax.max(at(&a, imax, j).abs());
            }
            for i in (imax + 1)..n {
                rowmax = rowmax.max(at(&a, i, imax).abs());
            }
            if absakk * rowmax >= BK_ALPHA * colmax * colmax {
                (k, 1)
            } else if at(&a, imax, imax).abs() >= BK_ALPHA * rowmax {
                (imax, 1)
            } else {
                (imax, 2)
            }
        };

        let kk = k + kstep - 1;
        if kp != kk {
            // Symmetric interchange of rows/columns kk and kp in the
            // trailing submatrix.
            for i in (kp + 1)..n {
                a.swap(i * n + kk, i * n + kp);
            }
            for j in (kk + 1)..kp {
                a.swap(j * n + kk, kp * n + j);
            }
            a.swap(kk * n + kk, kp * n + kp);
            if kstep == 2 {
                a.swap((k + 1) * n + k, kp * n + k);
            }
        }

        if kstep == 1 {
            let d11 = at(&a, k, k);
            if d11 == 0.0 {
                return Err(OracleError::SingularFactor { pivot: 0.0 });
            }
            let inv = 1.0 / d11;
            for i in (k + 1)..n {
                let lik = at(&a, i, k) * inv;
                for j in (k + 1)..=i {
                    a[i * n + j] -= lik * at(&a, j, k);
                }
            }
            for i in (k + 1)..n {
                a[i * n + k] *= inv;
            }
            pivots[k] = Pivot::Single(kp);
        } else {
            if k + 2 < n {
                let d21 = at(&a, k + 1, k);
                let d11 = at(&a, k + 1, k + 1) / d21;
                let d22 = at(&a, k, k) / d21;
                let t = 1.0 / (d11 * d22 - 1.0);
                let d21inv = t / d21;
                for j in (k + 2)..n {
                    let wk = d21inv * (d11 * at(&a, j, k) - at(&a, j, k + 1));
                    let wkp1 = d21inv * (d22 * at(&a, j, k + 1) - at(&a, j, k));
                    for i in j..n {
                        a[i * n + j] -= at(&a, i, k) * wk + at(&a, i, k + 1) * wkp1;
                    }
                    a[j * n + k] = wk;
                    a[j * n + (k + 1)] = wkp1;
                }
            }
            pivots[k] = Pivot::Pair(kp);
            pivots[k + 1] = Pivot::PairTail;
        }
        k += kstep;
    }
    Ok(LdltFactor { n, a, pivots })
}

impl LdltFactor {
    fn solve(&self, b: &[f64]) -> DenseVector {
        let n = self.n;
        let a = &self.a;
        let mut x = b.to_vec();

        // Forward: P L D y = b.
        let mut k = 0;
        while k < n {
            match self.pivots[k] {
                Pivot::Single(kp) => {
                    x.swap(k, kp);
                    let xk = x[k];
                    for i in (k + 1)..n {
                        x[i] -= a[i * n + k] * xk;
                    }
                    x[k] /= a[k * n + k];
                    k += 1;
                }
                Pivot::Pair(kp) => {
                    x.swap(k + 1, kp);
                    let (xk, xk1) = (x[k], x[k + 1]);
                    for i in (k + 2)..n {
                        x[i] -= a[i * n + k] * xk + a[i * n + (k + 1)] * xk1;
                    }
                    let akm1k = a[(k + 1) * n + k];
                    let akm1 = a[k * n + k] / akm1k;
                    let ak = a[(k + 1) * n + (k + 1)] / akm1k;
                    let denom = akm1 * ak - 1.0;
                    let bkm1 = x[k] / akm1k;
                    let bk = x[k + 1] / akm1k;
                    x[k] = (ak * bkm1 - bk) / denom;
                    x[k + 1] = (akm1 * bk - bkm1) / denom;
                    k += 2;
                }
                Pivot::PairTail => unreachable!("pair tail visited as block start"),
            }
        }

        // Backward: Lᵀ Pᵀ x = y.
        let mut kk = n;
        while kk > 0 {
            let idx = kk - 1;
            match self.pivots[idx] {
                Pivot::Single(kp) => {
                    let mut acc = x[idx];
                    for i in kk..n {
                        acc -= a[i * n + idx] * x[i];
                    }
                    x[idx] = acc;
                    x.swap(idx, kp);
                    kk -= 1;
                }
                Pivot::PairTail => {
                    let kstart = idx - 1;
                    let kp = match self.pivots[kstart] {
                        Pivot::Pair(kp) => kp,
                        _ => unreachable!("pair tail without block start"),
                    };
                    let mut acc0 = x[kstart];
                    let mut acc1 = x[idx];
                    for i in (idx + 1)..n {
                        acc0 -= a[i * n + kstart] * x[i];
                        acc1 -= a[i * n + idx] * x[i];
                    }
                    x[kstart] = acc0;
                    x[idx] = acc1;
                    x.swap(idx, kp);
                    kk -= 2;
                }
                Pivot::Pair(_) => unreachable!("block start visited as tail"),
            }
        }
        x
    }
}

/// Solves `(A - theta I) w = b` by dense Bunch–Kaufman LDLᵀ.
///
/// An exactly singular pivot is an error; near-singular shifted systems
/// (theta close to an eigenvalue) proceed and return the implied large
/// solution, which is exactly what Rayleigh quotient iteration needs.
pub fn direct_shifted_solve(
    a: &SymmetricSparseMatrix,
    theta: f64,
    b: &[f64],
) -> Result<DenseVector, OracleError> {
    let n = a.n();
    if n > DENSIFY_CAP {
        return Err(OracleError::CapExceeded {
            n,
            cap: DENSIFY_CAP,
        });
    }
    if b.len() != n {
        return Err(OracleError::Sparse(
            crate::error::SparseError::DimensionMismatch {
                matrix: n,
                vector: b.len(),
            },
        ));
    }
    let mut m = densify(a);
    for i in 0..n {
        m[i * n + i] -= theta;
    }
    let factor = ldlt_factor(n, m)?;
    Ok(factor.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{dot, norm2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(values: &[f64]) -> SymmetricSparseMatrix {
        let t: Vec<_> = values.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        SymmetricSparseMatrix::from_triplets(values.len(), &t).unwrap()
    }

    fn tridiag(n: usize, off: f64, d: f64) -> SymmetricSparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, d));
            if i + 1 < n {
                t.push((i, i + 1, off));
                t.push((i + 1, i, off));
            }
        }
        SymmetricSparseMatrix::from_triplets(n, &t).unwrap()
    }

    fn random_symmetric(n: usize, seed: u64) -> SymmetricSparseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = rng.gen_range(-1.0..1.0);
                t.push((i, j, v));
                if i != j {
                    t.push((j, i, v));
                }
            }
        }
        SymmetricSparseMatrix::from_triplets(n, &t).unwrap()
    }

    #[test]
    fn eig_of_permuted_diagonal() {
        let a = diag(&[3.0, 1.0, 2.0]);
        let pairs = dense_eigendecomposition(&a).unwrap();
        let vals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        for (got, want) in vals.iter().zip(&[1.0, 2.0, 3.0]) {
            assert!((got - want).abs() <= 1e-14);
        }
        // Eigenvectors are (signed) identity columns.
        for (idx, col) in [(0, 1usize), (1, 2usize), (2, 0usize)] {
            let v = &pairs[idx].1;
            assert!((v[col].abs() - 1.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn laplacian_eigenvalues_analytic() {
        let n = 40;
        let a = tridiag(n, -1.0, 2.0);
        let pairs = dense_eigendecomposition(&a).unwrap();
        for (j, (val, _)) in pairs.iter().enumerate() {
            let analytic =
                2.0 - 2.0 * ((j as f64 + 1.0) * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert!(
                (val - analytic).abs() <= 1e-12,
                "eigenvalue {j}: {val} vs {analytic}"
            );
        }
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        let n = 60;
        let a = random_symmetric(n, 7);
        let pairs = dense_eigendecomposition(&a).unwrap();

        // ||VᵀV - I||_max
        for i in 0..n {
            for j in i..n {
                let d = dot(&pairs[i].1, &pairs[j].1);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() <= 1e-12, "VtV({i},{j}) = {d}");
            }
        }

        // ||A - V Λ Vᵀ||_F <= 1e-10 ||A||_F
        let mut frob_a = 0.0;
        let mut frob_err = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut rec = 0.0;
                for (val, vec) in &pairs {
                    rec += val * vec[i] * vec[j];
                }
                let aij = {
                    let (cols, vals) = a.row(i);
                    cols.iter()
                        .position(|&c| c == j)
                        .map(|p| vals[p])
                        .unwrap_or(0.0)
                };
                frob_a += aij * aij;
                frob_err += (rec - aij) * (rec - aij);
            }
        }
        assert!(frob_err.sqrt() <= 1e-10 * frob_a.sqrt());
    }

    #[test]
    fn spectral_reference_diag_example() {
        let a = diag(&[0.0, 1.0, 10.0]);
        let r = spectral_reference(&a, -0.2).unwrap();
        assert_eq!(r.lambda, 0.0);
        assert_eq!(r.lambda2, 1.0);
        assert_eq!(r.beta, 10.0);
        assert!((norm2(&r.x) - 1.0).abs() <= 1e-14);
        assert!((r.lambda - r.sigma).abs() < (r.lambda2 - r.sigma).abs());
    }

    #[test]
    fn spectral_reference_rejects_multiple_eigenvalue() {
        let a = diag(&[1.0, 1.0, 5.0]);
        assert!(matches!(
            spectral_reference(&a, 0.0),
            Err(OracleError::NotSimple { .. })
        ));
    }

    #[test]
    fn shifted_solve_diagonal() {
        let a = diag(&[1.0, 2.0, 3.0]);
        let w = direct_shifted_solve(&a, 0.0, &[1.0, 1.0, 1.0]).unwrap();
        for (got, want) in w.iter().zip(&[1.0, 0.5, 1.0 / 3.0]) {
            assert!((got - want).abs() <= 1e-15);
        }
    }

    #[test]
    fn shifted_solve_exact_eigenvalue_is_singular() {
        // (A - I) for the 2x2 Laplacian-like matrix is exactly singular.
        let a = tridiag(2, -1.0, 2.0);
        assert!(matches!(
            direct_shifted_solve(&a, 1.0, &[1.0, 0.0]),
            Err(OracleError::SingularFactor { .. })
        ));
    }

    #[test]
    fn shifted_solve_residual_small() {
        let n = 50;
        let a = random_symmetric(n, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = direct_shifted_solve(&a, 0.3, &b).unwrap();
        let mut r = a.matvec(&w).unwrap();
        for i in 0..n {
            r[i] -= 0.3 * w[i];
            r[i] -= b[i];
        }
        assert!(
            norm2(&r) <= 1e-10 * norm2(&b),
            "residual {} too large",
            norm2(&r)
        );
    }

    #[test]
    fn shifted_solve_round_trip_indefinite() {
        // Shift into the interior of the spectrum so the factorization
        // exercises 2x2 pivots.
        let n = 30;
        let a = tridiag(n, -1.0, 2.0);
        let theta = 2.0; // middle of [0, 4]
        let b: Vec<f64> = (0..n).map(|i| ((i + 1) as f64).sin()).collect();
        let w = direct_shifted_solve(&a, theta, &b).unwrap();
        let aw = a.matvec(&w).unwrap();
        let mut res = 0.0;
        for i in 0..n {
            let r = aw[i] - theta * w[i] - b[i];
            res += r * r;
        }
        assert!(res.sqrt() <= 1e-10 * norm2(&b));
    }
}
