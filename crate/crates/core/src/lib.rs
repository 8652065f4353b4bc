//! Quasi-Monte Carlo and adaptive frequency sets for random Fourier
//! features.
//!
//! Unit-cube point sets ([`sequences`]) are mapped through the inverse CDF
//! of a product spectral density ([`densities`]) into frequency sets, which
//! define feature maps approximating shift-invariant kernels ([`featmap`]).
//! The box discrepancy ([`discrepancy`]) measures frequency-set quality and
//! is minimized directly in [`adaptive`].

pub mod adaptive;
pub mod densities;
pub mod discrepancy;
pub mod error;
pub mod experiment;
pub mod featmap;
pub mod io;
pub mod krr;
pub mod linalg;
pub mod sequences;
pub mod specfun;

pub use adaptive::{
    discrepancy_gradient, nonlinear_cg, optimize_global, optimize_greedy, optimize_weights, OptTrace, OptimizerOptions,
    StopReason, WeightSolution,
};
pub use densities::{transform, DensityKind, FrequencySet, ProductDensity};
pub use discrepancy::{
    box_discrepancy, box_discrepancy_gaussian, box_discrepancy_quadrature, expected_mc_discrepancy, BoxBounds,
    DiscrepancyReport,
};
pub use error::{Error, Result};
pub use experiment::{
    estimate_box, run_gram_experiment, run_pipeline, Dataset, ExperimentConfig, PipelineReport, SequenceKind,
};
pub use featmap::{gram_approx, gram_exact, GramErrorReport, Summary, WeightedFeatureMap};
pub use io::PointSetEnvelope;
pub use sequences::{Generator, UnitPointSet};
