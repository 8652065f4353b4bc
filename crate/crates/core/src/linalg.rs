//! Small dense linear-algebra helpers: Cholesky factorization and solves,
//! and the spectral norm of a symmetric matrix by power iteration.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Lower-triangular `L` with `L Lᵀ = a`. Only the lower triangle of `a` is read.
pub fn cholesky(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: diag });
        }
        let djj = diag.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / djj;
        }
    }
    Ok(l)
}

/// Solve `L y = b` for lower-triangular `L`.
pub fn forward_substitute(l: ArrayView2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[[i, k]] * y[k];
        }
        y[i] = v / l[[i, i]];
    }
    y
}

/// Solve `Lᵀ x = y` for lower-triangular `L`.
pub fn backward_substitute(l: ArrayView2<f64>, y: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut v = y[i];
        for k in (i + 1)..n {
            v -= l[[k, i]] * x[k];
        }
        x[i] = v / l[[i, i]];
    }
    x
}

/// Solve `a x = b` given the Cholesky factor of `a`.
pub fn cholesky_solve(l: ArrayView2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let y = forward_substitute(l, b);
    backward_substitute(l, y.view())
}

/// Largest absolute eigenvalue of a symmetric matrix.
///
/// Power iteration from a fixed start vector, stopped when the norm
/// estimate changes by less than `1e-12` relative or after 5000 steps.
pub fn spectral_norm_symmetric(a: ArrayView2<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    // Deterministic start with no special alignment to the coordinate axes.
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + 0.1 * ((i as f64 + 1.0) * 0.618_033_988_75).fract());
    let norm0 = v.dot(&v).sqrt();
    v /= norm0;
    let mut est = 0.0;
    for _ in 0..5000 {
        let w = a.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let done = (norm - est).abs() <= 1e-12 * norm;
        est = norm;
        v = w / norm;
        if done {
            break;
        }
    }
    est
}

pub fn frobenius_norm(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let l = cholesky(a.view()).unwrap();
        let back = l.dot(&l.t());
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-14);
        }
        let b = array![1.0, -2.0, 0.5];
        let x = cholesky_solve(l.view(), b.view());
        let r = a.dot(&x) - &b;
        assert!(r.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(
            cholesky(a.view()),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
    }

    #[test]
    fn spectral_norm_matches_eigen() {
        let a = array![[2.0, 1.0, 0.0], [1.0, -3.0, 0.5], [0.0, 0.5, 1.0]];
        let m = nalgebra::DMatrix::from_row_slice(3, 3, a.as_slice().unwrap());
        let eig = m.symmetric_eigen();
        let want = eig.eigenvalues.iter().map(|x: &f64| x.abs()).fold(0.0, f64::max);
        assert!((spectral_norm_symmetric(a.view()) - want).abs() < 1e-9);
    }

    #[test]
    fn spectral_norm_with_opposite_extremes() {
        let a = array![[1.0, 0.0], [0.0, -1.0]];
        assert!((spectral_norm_symmetric(a.view()) - 1.0).abs() < 1e-12);
        assert_eq!(spectral_norm_symmetric(Array2::<f64>::zeros((3, 3)).view()), 0.0);
    }
}
