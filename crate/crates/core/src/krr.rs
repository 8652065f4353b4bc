//! Ridge regression on explicit features, and exact-kernel ridge
//! regression as a reference.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::densities::ProductDensity;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve};

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("ridge lambda must be positive, got {lambda}")));
    }
    Ok(())
}

/// Solve `(ZᵀZ + λI) β = Zᵀy`.
pub fn krr_train(z: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64) -> Result<Array1<f64>> {
    check_lambda(lambda)?;
    if z.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: z.nrows(),
            got: y.len(),
        });
    }
    let mut a = z.t().dot(&z);
    a.diag_mut().mapv_inplace(|v| v + lambda);
    let l = cholesky(a.view())?;
    Ok(cholesky_solve(l.view(), z.t().dot(&y).view()))
}

pub fn krr_predict(beta: ArrayView1<f64>, z: ArrayView2<f64>) -> Result<Array1<f64>> {
    if z.ncols() != beta.len() {
        return Err(Error::DimensionMismatch {
            expected: beta.len(),
            got: z.ncols(),
        });
    }
    Ok(z.dot(&beta))
}

/// `‖pred - y‖₂ / ‖y‖₂`, or the absolute error when `y` is zero.
pub fn regression_error(pred: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
    if pred.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: pred.len(),
        });
    }
    let err = pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>().sqrt();
    let norm = y.dot(&y).sqrt();
    Ok(if norm == 0.0 { err } else { err / norm })
}

/// Kernel ridge regression with the exact kernel: `(K + λI) α = y`.
#[derive(Debug, Clone)]
pub struct ExactKrr {
    density: ProductDensity,
    x_train: Array2<f64>,
    alpha: Array1<f64>,
}

impl ExactKrr {
    pub fn train(density: &ProductDensity, x: ArrayView2<f64>, y: ArrayView1<f64>, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        let mut k = cross_kernel(density, x, x)?;
        k.diag_mut().mapv_inplace(|v| v + lambda);
        let l = cholesky(k.view())?;
        Ok(Self {
            density: density.clone(),
            x_train: x.to_owned(),
            alpha: cholesky_solve(l.view(), y),
        })
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(cross_kernel(&self.density, x, self.x_train.view())?.dot(&self.alpha))
    }
}

/// Exact kernel values between the rows of `a` and the rows of `b`.
pub fn cross_kernel(density: &ProductDensity, a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.ncols() != density.dim() || b.ncols() != density.dim() {
        return Err(Error::DimensionMismatch {
            expected: density.dim(),
            got: if a.ncols() != density.dim() {
                a.ncols()
            } else {
                b.ncols()
            },
        });
    }
    let mut k = Array2::<f64>::zeros((a.nrows(), b.nrows()));
    k.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(a.axis_iter(Axis(0)))
        .for_each(|(mut row, xa)| {
            for (v, xb) in row.iter_mut().zip(b.rows()) {
                *v = density.exact_kernel(xa, xb);
            }
        });
    Ok(k)
}
