//! Dense vector kernels shared by every solver module.
//!
//! Vectors are plain `Vec<f64>` / `&[f64]`; these functions supply the
//! handful of BLAS-1 style operations the solvers need.

use crate::error::SparseError;

/// A dense real vector. Length must match the matrix dimension wherever
/// the two are combined; the matrix operations enforce this.
pub type DenseVector = Vec<f64>;

/// Euclidean inner product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// x *= alpha
pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

/// Returns `v / ||v||`; a zero (or non-finite) norm is an error.
pub fn normalize(v: &[f64]) -> Result<DenseVector, SparseError> {
    let n = norm2(v);
    if n == 0.0 || !n.is_finite() {
        return Err(SparseError::ZeroVector);
    }
    let mut out = v.to_vec();
    scale(1.0 / n, &mut out);
    Ok(out)
}

/// out = a - b
pub fn sub(a: &[f64], b: &[f64]) -> DenseVector {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dot_and_norm_basics() {
        let a = vec![1.0, 2.0, 2.0];
        assert_eq!(dot(&a, &a), 9.0);
        assert_eq!(norm2(&a), 3.0);
    }

    #[test]
    fn normalize_zero_is_error() {
        assert!(normalize(&[0.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn normalize_gives_unit_norm(v in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
            prop_assume!(norm2(&v) > 1e-12);
            let u = normalize(&v).unwrap();
            prop_assert!((norm2(&u) - 1.0).abs() <= 1e-15);
        }

        #[test]
        fn axpy_matches_reference(
            alpha in -10.0f64..10.0,
            v in proptest::collection::vec(-1e3f64..1e3, 1..20),
        ) {
            let x = v.clone();
            let mut y = v.clone();
            axpy(alpha, &x, &mut y);
            for (yi, xi) in y.iter().zip(&x) {
                prop_assert!((yi - (xi + alpha * xi)).abs() <= 1e-9 * xi.abs().max(1.0));
            }
        }
    }
}
