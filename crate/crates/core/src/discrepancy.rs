//! Box discrepancy of a frequency set: the distance, in the Paley–Wiener
//! space of functions band-limited to a box, between the kernel mean of the
//! frequency density and the empirical mean over the set.
//!
//! For a Gaussian density the squared discrepancy has a closed form made of
//! three terms:
//!
//! * `term1`, the pairwise sinc sum `s⁻² Σ_l Σ_m sinc_b(w_l, w_m)`;
//! * `term2`, the cross term `-(2/s) Σ_l Π_j c_lj Re erf(b_j/(σ_j√2) - iσ_j w_lj/√2)`;
//! * `term3`, the kernel-mean norm `Π_j σ_j/(2√π) erf(b_j/σ_j)`.
//!
//! [`box_discrepancy_quadrature`] evaluates the same quantity from the
//! characteristic functions by numerical integration, for any product
//! density, and is the reference the closed form is tested against.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::densities::{FrequencySet, ProductDensity};
use crate::error::{Error, Result};
use crate::specfun::{erf_complex_real_scaled, erf_real};

/// The box `{u : |u_j| <= b_j}` that data differences `x - z` live in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub b: Vec<f64>,
}

impl BoxBounds {
    pub fn new(b: Vec<f64>) -> Result<Self> {
        if b.is_empty() {
            return Err(Error::invalid("box needs at least one dimension"));
        }
        if let Some(bad) = b.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::invalid(format!(
                "box half-widths must be positive and finite, got {bad}"
            )));
        }
        Ok(Self { b })
    }

    pub fn uniform(b: f64, d: usize) -> Result<Self> {
        Self::new(vec![b; d])
    }

    /// Every half-width multiplied by `factor` (0.5 gives the central half-box).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.b.iter().map(|v| v * factor).collect())
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn volume_factor(&self) -> f64 {
        self.b.iter().product()
    }
}

/// Squared box discrepancy and its three summands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub d_squared: f64,
    /// Pairwise sinc sum.
    pub term1: f64,
    /// Cross term (negative).
    pub term2: f64,
    /// Kernel-mean norm.
    pub term3: f64,
    pub s: usize,
    pub d: usize,
}

/// `sin(b δ) / δ`, equal to `b` at `δ = 0`.
#[inline]
fn sin_ratio(b: f64, delta: f64) -> f64 {
    let z = b * delta;
    if delta.abs() < 1e-300 {
        b
    } else if z.abs() < 1e-6 {
        b * (1.0 - z * z / 6.0)
    } else {
        z.sin() / delta
    }
}

/// Derivative of `sin z / z`, zero at the origin.
#[inline]
pub(crate) fn sinc_prime(z: f64) -> f64 {
    if z.abs() < 0.1 {
        let z2 = z * z;
        z * (-1.0 / 3.0 + z2 * (1.0 / 30.0 + z2 * (-1.0 / 840.0 + z2 * (1.0 / 45_360.0 - z2 / 3_991_680.0))))
    } else {
        let (s, c) = z.sin_cos();
        c / z - s / (z * z)
    }
}

/// One-dimensional factor `sin(b δ) / (π δ)` of the sinc kernel.
#[inline]
pub(crate) fn sinc_factor(b: f64, delta: f64) -> f64 {
    sin_ratio(b, delta) / PI
}

/// Derivative in `δ` of [`sinc_factor`]: `(b²/π) sinc'(b δ)`.
#[inline]
pub(crate) fn sinc_factor_prime(b: f64, delta: f64) -> f64 {
    b * b / PI * sinc_prime(b * delta)
}

/// Reproducing kernel of the Paley–Wiener space over the box:
/// `π^-d Π_j sin(b_j (u_j - v_j)) / (u_j - v_j)`.
pub fn sinc_kernel(bounds: &BoxBounds, u: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
    bounds
        .b
        .iter()
        .zip(u.iter().zip(v.iter()))
        .map(|(&b, (&x, &y))| sinc_factor(b, x - y))
        .product()
}

fn check_dims(freqs: &FrequencySet, density: &ProductDensity, bounds: &BoxBounds) -> Result<()> {
    let d = freqs.dim();
    if density.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: density.dim(),
        });
    }
    if bounds.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bounds.dim(),
        });
    }
    Ok(())
}

/// `g_j(x) = c_j e^{-σ²x²/2} Re erf(b/(σ√2) - iσx/√2)`, the closed form of
/// `(2π)⁻¹ ∫_{-b}^{b} φ_j(β) e^{iβx} dβ` for a Gaussian marginal.
#[inline]
pub(crate) fn gaussian_mean_factor(sigma: f64, b: f64, x: f64) -> f64 {
    let c = sigma / (2.0 * PI).sqrt();
    // Re erf is even in the imaginary part, so the sign of x is immaterial.
    c * erf_complex_real_scaled(b / sigma * FRAC_1_SQRT_2, sigma * x * FRAC_1_SQRT_2)
}

/// Derivative of [`gaussian_mean_factor`] in `x`.
#[inline]
pub(crate) fn gaussian_mean_factor_prime(sigma: f64, b: f64, x: f64) -> f64 {
    let c = sigma / (2.0 * PI).sqrt();
    -sigma * sigma * x * gaussian_mean_factor(sigma, b, x)
        + (2.0 / PI).sqrt() * c * sigma * (-b * b / (2.0 * sigma * sigma)).exp() * (b * x).sin()
}

/// `Π_j σ_j/(2√π) erf(b_j/σ_j)`: squared norm of the kernel mean embedding.
pub fn kernel_mean_norm_gaussian(density: &ProductDensity, bounds: &BoxBounds) -> f64 {
    density
        .scale
        .iter()
        .zip(&bounds.b)
        .map(|(&sigma, &b)| sigma / (2.0 * PI.sqrt()) * erf_real(b / sigma))
        .product()
}

/// Cross-term values `v_l = Π_j g_j(w_lj)` for every frequency.
fn mean_embedding_values(freqs: &FrequencySet, density: &ProductDensity, bounds: &BoxBounds) -> Array1<f64> {
    let rows: Vec<f64> = freqs
        .points
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|w| {
            w.iter()
                .zip(density.scale.iter().zip(&bounds.b))
                .map(|(&x, (&sigma, &b))| gaussian_mean_factor(sigma, b, x))
                .product()
        })
        .collect();
    Array1::from(rows)
}

/// `Σ_l Σ_m sinc_b(w_l, w_m)`. Rows are summed in parallel, then combined
/// in index order, so the result does not depend on the thread count.
fn pairwise_sinc_sum(freqs: &FrequencySet, bounds: &BoxBounds) -> f64 {
    let s = freqs.len();
    let row_sums: Vec<f64> = (0..s)
        .into_par_iter()
        .map(|l| {
            let wl = freqs.row(l);
            (0..s).map(|m| sinc_kernel(bounds, wl, freqs.row(m))).sum::<f64>()
        })
        .collect();
    row_sums.iter().sum()
}

/// Closed-form squared box discrepancy for a Gaussian density.
pub fn box_discrepancy_gaussian(
    freqs: &FrequencySet,
    density: &ProductDensity,
    bounds: &BoxBounds,
) -> Result<DiscrepancyReport> {
    density.require_gaussian("box_discrepancy_gaussian")?;
    check_dims(freqs, density, bounds)?;
    let s = freqs.len();
    let term3 = kernel_mean_norm_gaussian(density, bounds);
    if s == 0 {
        return Ok(DiscrepancyReport {
            d_squared: term3,
            term1: 0.0,
            term2: 0.0,
            term3,
            s,
            d: freqs.dim(),
        });
    }
    let sf = s as f64;
    let term1 = pairwise_sinc_sum(freqs, bounds) / (sf * sf);
    let term2 = -2.0 / sf * mean_embedding_values(freqs, density, bounds).sum();
    Ok(DiscrepancyReport {
        d_squared: term1 + term2 + term3,
        term1,
        term2,
        term3,
        s,
        d: freqs.dim(),
    })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss–Legendre rule for `∫_0^b f`.
struct HalfLineRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl HalfLineRule {
    fn new(b: f64, panels: usize, per_panel: usize) -> Self {
        let (x, w) = gauss_legendre(per_panel);
        let h = b / panels as f64;
        let mut nodes = Vec::with_capacity(panels * per_panel);
        let mut weights = Vec::with_capacity(panels * per_panel);
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * h;
            for (&xi, &wi) in x.iter().zip(&w) {
                nodes.push(mid + 0.5 * h * xi);
                weights.push(0.5 * h * wi);
            }
        }
        Self { nodes, weights }
    }

    fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Squared box discrepancy by numerical quadrature, valid for any product
/// density and `d <= 3`.
///
/// Every term is written through the Fourier representation
/// `sin(bδ)/(πδ) = (2π)⁻¹ ∫_{-b}^{b} e^{iβδ} dβ` and integrated
/// one dimension at a time:
///
/// * `term1 = s⁻² Σ_{l,m} Π_j (2π)⁻¹ ∫ cos(β (w_lj - w_mj)) dβ`
/// * `term2 = -(2/s) Σ_l Π_j (2π)⁻¹ ∫ φ_j(β) cos(β w_lj) dβ`
/// * `term3 = Π_j (2π)⁻¹ ∫ |φ_j(β)|² dβ`
///
/// All integrands are even, so each integral is twice the integral over
/// `[0, b_j]`, evaluated with `nodes`-point Gauss–Legendre panels. Panel
/// count grows with the largest frequency so every panel sees at most a
/// fraction of an oscillation.
pub fn box_discrepancy_quadrature(
    freqs: &FrequencySet,
    density: &ProductDensity,
    bounds: &BoxBounds,
    nodes: usize,
) -> Result<DiscrepancyReport> {
    check_dims(freqs, density, bounds)?;
    let d = freqs.dim();
    if d > 3 {
        return Err(Error::invalid(format!(
            "quadrature discrepancy supports d <= 3, got d = {d}"
        )));
    }
    if nodes < 32 {
        return Err(Error::invalid(format!(
            "need at least 32 quadrature nodes, got {nodes}"
        )));
    }
    let s = freqs.len();
    let max_w = freqs.points.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let rules: Vec<HalfLineRule> = bounds
        .b
        .iter()
        .map(|&b| {
            // Differences w_l - w_m reach 2 max|w|.
            let panels = 4 + (b * 2.0 * max_w).ceil() as usize;
            HalfLineRule::new(b, panels, nodes)
        })
        .collect();
    let one_dim = |j: usize, f: &dyn Fn(f64) -> f64| 2.0 * rules[j].integrate(f) / (2.0 * PI);

    let term3: f64 = (0..d)
        .map(|j| {
            one_dim(j, &|beta| {
                let phi = density.characteristic(j, beta);
                phi * phi
            })
        })
        .product();
    if s == 0 {
        return Ok(DiscrepancyReport {
            d_squared: term3,
            term1: 0.0,
            term2: 0.0,
            term3,
            s,
            d,
        });
    }
    let sf = s as f64;
    let mut cross = 0.0;
    for l in 0..s {
        let w = freqs.row(l);
        cross += (0..d)
            .map(|j| one_dim(j, &|beta| density.characteristic(j, beta) * (beta * w[j]).cos()))
            .product::<f64>();
    }
    let mut pair = 0.0;
    for l in 0..s {
        for m in 0..s {
            let (wl, wm) = (freqs.row(l), freqs.row(m));
            pair += (0..d)
                .map(|j| one_dim(j, &|beta| (beta * (wl[j] - wm[j])).cos()))
                .product::<f64>();
        }
    }
    let term1 = pair / (sf * sf);
    let term2 = -2.0 * cross / sf;
    Ok(DiscrepancyReport {
        d_squared: term1 + term2 + term3,
        term1,
        term2,
        term3,
        s,
        d,
    })
}

/// Squared box discrepancy: closed form for Gaussian densities, quadrature
/// (with 64 nodes per panel) otherwise.
pub fn box_discrepancy(
    freqs: &FrequencySet,
    density: &ProductDensity,
    bounds: &BoxBounds,
) -> Result<DiscrepancyReport> {
    match density.kind {
        crate::densities::DensityKind::Gaussian => box_discrepancy_gaussian(freqs, density, bounds),
        crate::densities::DensityKind::Cauchy => box_discrepancy_quadrature(freqs, density, bounds, 64),
    }
}

/// Expected squared box discrepancy of `s` i.i.d. draws from a Gaussian density:
/// `(π^-d Π b_j - Π_j σ_j/(2√π) erf(b_j/σ_j)) / s`.
pub fn expected_mc_discrepancy(s: usize, density: &ProductDensity, bounds: &BoxBounds) -> Result<f64> {
    density.require_gaussian("expected_mc_discrepancy")?;
    if s == 0 {
        return Err(Error::invalid("s must be at least 1"));
    }
    if density.dim() != bounds.dim() {
        return Err(Error::DimensionMismatch {
            expected: density.dim(),
            got: bounds.dim(),
        });
    }
    let d = bounds.dim() as i32;
    let diag = bounds.volume_factor() / PI.powi(d);
    Ok((diag - kernel_mean_norm_gaussian(density, bounds)) / s as f64)
}

/// Sinc Gram matrix `H_lm = sinc_b(w_l, w_m)` and mean-embedding vector
/// `v_l = Π_j g_j(w_lj)` of a frequency set, for weighted discrepancies
/// `term3 + ξᵀHξ - 2vᵀξ`.
pub fn assemble_h_v(
    freqs: &FrequencySet,
    density: &ProductDensity,
    bounds: &BoxBounds,
) -> Result<(Array2<f64>, Array1<f64>)> {
    density.require_gaussian("assemble_h_v")?;
    check_dims(freqs, density, bounds)?;
    let s = freqs.len();
    let mut h = Array2::<f64>::zeros((s, s));
    h.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(l, mut row)| {
            let wl = freqs.row(l);
            for (m, v) in row.iter_mut().enumerate() {
                *v = sinc_kernel(bounds, wl, freqs.row(m));
            }
        });
    Ok((h, mean_embedding_values(freqs, density, bounds)))
}

/// Squared box discrepancy of the weighted rule `Σ_l ξ_l f(w_l)`.
pub fn weighted_discrepancy(
    freqs: &FrequencySet,
    weights: ArrayView1<f64>,
    density: &ProductDensity,
    bounds: &BoxBounds,
) -> Result<f64> {
    if weights.len() != freqs.len() {
        return Err(Error::DimensionMismatch {
            expected: freqs.len(),
            got: weights.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return Err(Error::invalid(format!("weights must be nonnegative, got {w}")));
    }
    let (h, v) = assemble_h_v(freqs, density, bounds)?;
    Ok(weighted_objective(
        &h,
        &v,
        weights,
        kernel_mean_norm_gaussian(density, bounds),
    ))
}

/// `term3 + ξᵀHξ - 2vᵀξ`.
pub fn weighted_objective(h: &Array2<f64>, v: &Array1<f64>, xi: ArrayView1<f64>, term3: f64) -> f64 {
    term3 + xi.dot(&h.dot(&xi)) - 2.0 * v.dot(&xi)
}

/// Outcome of the average-case error check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageCaseCheck {
    /// Sample mean of the squared integration error of `x ↦ e^{-iuᵀx}` over `u` uniform on the box.
    pub empirical: f64,
    /// `π^d / Π b_j · D²`.
    pub predicted: f64,
    /// Standard error of `empirical`.
    pub std_error: f64,
    pub d_squared: f64,
    pub n_samples: usize,
}

impl AverageCaseCheck {
    /// |empirical - predicted| in standard errors.
    pub fn z_score(&self) -> f64 {
        (self.empirical - self.predicted).abs() / self.std_error
    }
}

/// Monte Carlo check that the mean squared integration error of the
/// characters `e^{-iuᵀx}`, `u` uniform on the box, is `π^d / Π b_j` times
/// the squared box discrepancy.
pub fn average_case_mc_check(
    freqs: &FrequencySet,
    density: &ProductDensity,
    bounds: &BoxBounds,
    n_samples: usize,
    seed: u64,
) -> Result<AverageCaseCheck> {
    if n_samples < 1000 {
        return Err(Error::invalid(format!("need at least 1000 samples, got {n_samples}")));
    }
    let report = box_discrepancy_gaussian(freqs, density, bounds)?;
    let d = freqs.dim();
    let s = freqs.len() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let us: Vec<Vec<f64>> = (0..n_samples)
        .map(|_| {
            bounds
                .b
                .iter()
                .map(|&b| b * (2.0 * rng.random::<f64>() - 1.0))
                .collect()
        })
        .collect();

    let sq_err: Vec<f64> = us
        .par_iter()
        .map(|u| {
            let exact: f64 = (0..d).map(|j| density.characteristic(j, u[j])).product();
            let (mut re, mut im) = (0.0, 0.0);
            for w in freqs.points.axis_iter(Axis(0)) {
                let ph: f64 = w.iter().zip(u).map(|(a, b)| a * b).sum();
                re += ph.cos();
                im -= ph.sin();
            }
            let (er, ei) = (exact - re / s, -im / s);
            er * er + ei * ei
        })
        .collect();

    let n = n_samples as f64;
    let mean = sq_err.iter().sum::<f64>() / n;
    let var = sq_err.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let predicted = PI.powi(d as i32) / bounds.volume_factor() * report.d_squared;
    Ok(AverageCaseCheck {
        empirical: mean,
        predicted,
        std_error: (var / n).sqrt(),
        d_squared: report.d_squared,
        n_samples,
    })
}
