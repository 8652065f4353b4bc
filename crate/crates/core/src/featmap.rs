//! Fourier feature maps built from a frequency set, their Gram matrices,
//! and relative Gram approximation errors.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::densities::{FrequencySet, ProductDensity};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, spectral_norm_symmetric};

/// Largest number of data rows a Gram matrix is built for.
pub const DEFAULT_MAX_GRAM_ROWS: usize = 20_000;

/// Frequencies with nonnegative per-feature weights.
///
/// With uniform weights `1/s` this is the plain random Fourier feature map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedFeatureMap {
    pub freqs: FrequencySet,
    pub weights: Array1<f64>,
}

impl WeightedFeatureMap {
    pub fn uniform(freqs: FrequencySet) -> Self {
        let s = freqs.len();
        let weights = Array1::from_elem(s, 1.0 / s as f64);
        Self { freqs, weights }
    }

    pub fn with_weights(freqs: FrequencySet, weights: Array1<f64>) -> Result<Self> {
        if weights.len() != freqs.len() {
            return Err(Error::DimensionMismatch {
                expected: freqs.len(),
                got: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid(format!("feature weights must be >= 0, got {w}")));
        }
        Ok(Self { freqs, weights })
    }

    /// Number of frequencies `s`.
    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.freqs.dim()
    }

    /// `(sqrt(xi_l) e^{-i xᵀw_l})_l`.
    pub fn feature_vector(&self, x: ArrayView1<f64>) -> Array1<Complex64> {
        let phases = self.freqs.points.dot(&x);
        Zip::from(&phases)
            .and(&self.weights)
            .map_collect(|&ph, &xi| Complex64::from_polar(xi.sqrt(), -ph))
    }

    /// `sum_l xi_l e^{-i (x - z)ᵀ w_l}`, i.e. `<Psi(x), Psi(z)>` in `C^s`.
    pub fn approx_kernel(&self, x: ArrayView1<f64>, z: ArrayView1<f64>) -> Complex64 {
        let diff = &x - &z;
        let phases = self.freqs.points.dot(&diff);
        phases
            .iter()
            .zip(&self.weights)
            .map(|(&ph, &xi)| Complex64::from_polar(xi, -ph))
            .sum()
    }

    /// `(sqrt(xi_l) cos(xᵀw_l))_l` followed by `(sqrt(xi_l) sin(xᵀw_l))_l`.
    /// Inner products of these equal `Re approx_kernel`.
    pub fn real_feature_vector(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let s = self.len();
        let phases = self.freqs.points.dot(&x);
        let mut out = Array1::<f64>::zeros(2 * s);
        for (l, (&ph, &xi)) in phases.iter().zip(&self.weights).enumerate() {
            let (sn, cs) = ph.sin_cos();
            let r = xi.sqrt();
            out[l] = r * cs;
            out[s + l] = r * sn;
        }
        out
    }

    /// Real features of every row of `x`, as an `n × 2s` matrix.
    pub fn real_feature_matrix(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.ncols(),
            });
        }
        let s = self.len();
        let mut out = Array2::<f64>::zeros((x.nrows(), 2 * s));
        Zip::from(out.axis_iter_mut(Axis(0)))
            .and(x.axis_iter(Axis(0)))
            .par_for_each(|mut dst, row| dst.assign(&self.real_feature_vector(row)));
        Ok(out)
    }
}

fn check_rows(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Empty("data matrix".into()));
    }
    if n > DEFAULT_MAX_GRAM_ROWS {
        return Err(Error::TooManyRows {
            n,
            cap: DEFAULT_MAX_GRAM_ROWS,
        });
    }
    Ok(())
}

/// Exact Gram matrix `K_ij = k(x_i, x_j)` of the kernel paired with `density`.
pub fn gram_exact(density: &ProductDensity, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_rows(x.nrows())?;
    if x.ncols() != density.dim() {
        return Err(Error::DimensionMismatch {
            expected: density.dim(),
            got: x.ncols(),
        });
    }
    let n = x.nrows();
    let mut k = Array2::<f64>::zeros((n, n));
    k.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let xi = x.row(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = density.exact_kernel(xi, x.row(j));
            }
        });
    Ok(k)
}

/// Approximate Gram matrix `Re <Psi(x_i), Psi(x_j)>`.
///
/// Computed as `Z Zᵀ` from the real cos/sin features, which is the same
/// quantity by `cos(a - b) = cos a cos b + sin a sin b`; the lower triangle
/// is mirrored so the result is exactly symmetric.
pub fn gram_approx(map: &WeightedFeatureMap, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_rows(x.nrows())?;
    let z = map.real_feature_matrix(x)?;
    let mut k = z.dot(&z.t());
    let n = k.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            k[[i, j]] = k[[j, i]];
        }
    }
    Ok(k)
}

/// `(‖K - K̃‖₂ / ‖K‖₂, ‖K - K̃‖_F / ‖K‖_F)`.
pub fn relative_errors(exact: ArrayView2<f64>, approx: ArrayView2<f64>) -> Result<(f64, f64)> {
    if exact.shape() != approx.shape() {
        return Err(Error::invalid(format!(
            "Gram shapes differ: {:?} vs {:?}",
            exact.shape(),
            approx.shape()
        )));
    }
    let diff = &exact - &approx;
    let spectral = spectral_norm_symmetric(diff.view()) / spectral_norm_symmetric(exact);
    let frobenius = frobenius_norm(diff.view()) / frobenius_norm(exact);
    Ok((spectral, frobenius))
}

/// Mean and (population) standard deviation of repeated measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl Summary {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            values,
        }
    }
}

/// Gram approximation errors of one sequence type at one feature count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramErrorReport {
    pub sequence: String,
    pub s: usize,
    pub trials: usize,
    pub relative_spectral: Summary,
    pub relative_frobenius: Summary,
}
