//! Product frequency densities of shift-invariant kernels and the
//! inverse-CDF map from the unit cube to frequency space.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequences::UnitPointSet;
use crate::specfun::{cauchy_quantile, normal_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    /// `N(0, sigma_j^-2)` per dimension; Gaussian kernel of bandwidth `sigma_j`.
    Gaussian,
    /// Cauchy with scale `1/sigma_j` per dimension; Laplacian kernel.
    Cauchy,
}

impl DensityKind {
    /// Kernel name as used on the command line.
    pub fn kernel_name(self) -> &'static str {
        match self {
            DensityKind::Gaussian => "gaussian",
            DensityKind::Cauchy => "laplacian",
        }
    }
}

impl fmt::Display for DensityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kernel_name())
    }
}

impl FromStr for DensityKind {
    type Err = Error;

    /// Accepts kernel names (`gaussian`, `laplacian`) or density names
    /// (`normal`, `cauchy`).
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" | "rbf" => Ok(DensityKind::Gaussian),
            "laplacian" | "cauchy" => Ok(DensityKind::Cauchy),
            "matern" | "t" | "student-t" => Err(Error::UnsupportedDensity(format!(
                "{s}: the multivariate t density of the Matern kernel does not factor across dimensions"
            ))),
            other => Err(Error::UnsupportedDensity(format!(
                "unknown kernel '{other}' (expected gaussian or laplacian)"
            ))),
        }
    }
}

/// A density that factors as `p(x) = prod_j p_j(x_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductDensity {
    pub kind: DensityKind,
    /// Kernel bandwidths `sigma_j`, one per dimension.
    pub scale: Vec<f64>,
}

impl ProductDensity {
    pub fn new(kind: DensityKind, scale: Vec<f64>) -> Result<Self> {
        if scale.is_empty() {
            return Err(Error::invalid("density needs at least one dimension"));
        }
        if let Some(bad) = scale.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::invalid(format!(
                "density scales must be positive and finite, got {bad}"
            )));
        }
        Ok(Self { kind, scale })
    }

    pub fn gaussian(scale: Vec<f64>) -> Result<Self> {
        Self::new(DensityKind::Gaussian, scale)
    }

    pub fn cauchy(scale: Vec<f64>) -> Result<Self> {
        Self::new(DensityKind::Cauchy, scale)
    }

    /// Same bandwidth in every one of `d` dimensions.
    pub fn isotropic(kind: DensityKind, sigma: f64, d: usize) -> Result<Self> {
        Self::new(kind, vec![sigma; d])
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    /// Inverse CDF of the `j`-th marginal.
    pub fn quantile(&self, j: usize, u: f64) -> Result<f64> {
        let sigma = self.scale[j];
        match self.kind {
            DensityKind::Gaussian => normal_quantile(u, sigma),
            DensityKind::Cauchy => cauchy_quantile(u, 1.0 / sigma),
        }
    }

    /// Characteristic function `phi_j(beta)` of the `j`-th marginal.
    pub fn characteristic(&self, j: usize, beta: f64) -> f64 {
        let sigma = self.scale[j];
        match self.kind {
            DensityKind::Gaussian => (-beta * beta / (2.0 * sigma * sigma)).exp(),
            DensityKind::Cauchy => (-beta.abs() / sigma).exp(),
        }
    }

    /// `k(x, z) = prod_j phi_j(x_j - z_j)`: the kernel whose Fourier
    /// transform is this density.
    pub fn exact_kernel(&self, x: ArrayView1<f64>, z: ArrayView1<f64>) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(z.len(), self.dim());
        // Sum exponents rather than multiplying factors.
        let mut expo = 0.0;
        for ((&xi, &zi), &sigma) in x.iter().zip(z.iter()).zip(&self.scale) {
            let diff = xi - zi;
            expo += match self.kind {
                DensityKind::Gaussian => diff * diff / (2.0 * sigma * sigma),
                DensityKind::Cauchy => diff.abs() / sigma,
            };
        }
        (-expo).exp()
    }

    pub(crate) fn require_gaussian(&self, what: &str) -> Result<()> {
        match self.kind {
            DensityKind::Gaussian => Ok(()),
            DensityKind::Cauchy => Err(Error::UnsupportedDensity(format!(
                "{what} has a closed form only for the Gaussian density"
            ))),
        }
    }
}

/// Frequency vectors `w_1..w_s`, one per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySet {
    pub points: Array2<f64>,
    /// Where the frequencies came from, e.g. `halton(start=1)` or `global-cg`.
    pub provenance: String,
}

impl FrequencySet {
    pub fn new(points: Array2<f64>, provenance: impl Into<String>) -> Result<Self> {
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("frequency set contains non-finite entries"));
        }
        Ok(Self {
            points,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn row(&self, l: usize) -> ArrayView1<'_, f64> {
        self.points.row(l)
    }
}

/// Map unit-cube points through the per-dimension inverse CDFs of `density`.
pub fn transform(set: &UnitPointSet, density: &ProductDensity) -> Result<FrequencySet> {
    if set.dim() != density.dim() {
        return Err(Error::DimensionMismatch {
            expected: density.dim(),
            got: set.dim(),
        });
    }
    if let Some(&bad) = set.points.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::ProbabilityOutOfRange(bad));
    }
    let mut out = Array2::<f64>::zeros(set.points.raw_dim());
    Zip::from(out.axis_iter_mut(Axis(0)))
        .and(set.points.axis_iter(Axis(0)))
        .par_for_each(|mut dst, src| {
            for (j, (w, &t)) in dst.iter_mut().zip(src.iter()).enumerate() {
                // Domain and scales were checked above.
                *w = density.quantile(j, t).expect("quantile of validated point");
            }
        });
    Ok(FrequencySet {
        points: out,
        provenance: format!("{}(start={})", set.generator, set.seed_or_start),
    })
}
