//! Small dense linear-algebra helpers for fitting and probing.

use crate::scalar::Scalar;

/// Solve `A x = b` for symmetric positive-definite `A` (row-major `n x n`)
/// by Cholesky factorization. Returns `None` when a pivot collapses.
pub fn cholesky_solve<T: Scalar>(a: &[T], b: &[T], n: usize) -> Option<Vec<T>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= T::zero() || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    // forward substitution L y = b
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    // back substitution L^T x = y
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

/// Ridge-regularized least squares `min ||X w + c - y||^2`: returns the
/// weight vector with an intercept appended. Used by data-quality probes.
pub fn linear_probe_fit<T: Scalar>(xs: &[Vec<T>], ys: &[T], ridge: f64) -> Option<Vec<T>> {
    let n = xs.len();
    if n == 0 {
        return None;
    }
    let d = xs[0].len() + 1; // + intercept
    let mut normal = vec![T::zero(); d * d];
    let mut rhs = vec![T::zero(); d];
    let mut row = vec![T::zero(); d];
    for (x, &y) in xs.iter().zip(ys) {
        row[..d - 1].copy_from_slice(x);
        row[d - 1] = T::one();
        for i in 0..d {
            rhs[i] += y * row[i];
            for j in 0..d {
                normal[i * d + j] += row[i] * row[j];
            }
        }
    }
    let r = T::lit(ridge);
    for i in 0..d {
        normal[i * d + i] += r;
    }
    cholesky_solve(&normal, &rhs, d)
}

/// Apply a fitted probe (weights + trailing intercept) to one sample.
pub fn linear_probe_predict<T: Scalar>(w: &[T], x: &[T]) -> T {
    let mut acc = w[w.len() - 1];
    for (&wi, &xi) in w.iter().zip(x) {
        acc += wi * xi;
    }
    acc
}
