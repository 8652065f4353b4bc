//! Datasets, experiment configuration, Gram-error sweeps and the end-to-end
//! pipeline report.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adaptive::{optimize_global, optimize_greedy, optimize_weights, OptimizerOptions};
use crate::densities::{transform, DensityKind, ProductDensity};
use crate::discrepancy::{box_discrepancy, weighted_discrepancy, BoxBounds};
use crate::error::{Error, Result};
use crate::featmap::{gram_approx, gram_exact, relative_errors, GramErrorReport, Summary, WeightedFeatureMap};
use crate::io::read_matrix_csv_file;
use crate::krr::{krr_predict, krr_train, regression_error, ExactKrr};
use crate::sequences::{halton, korobov_search, lattice, mc_uniform};

/// Width given to a feature whose observed range is zero.
pub const DEGENERATE_BOX_WIDTH: f64 = 1e-12;

/// Feature matrix with an optional regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Option<Array1<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Option<Array1<f64>>) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        if let Some(y) = &y {
            if y.len() != x.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: x.nrows(),
                    got: y.len(),
                });
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("target contains non-finite values"));
            }
        }
        Ok(Self { x, y })
    }

    /// Split a numeric matrix, taking the last column as the target when
    /// `has_target` is set.
    pub fn from_matrix(m: Array2<f64>, has_target: bool) -> Result<Self> {
        if !has_target {
            return Self::new(m, None);
        }
        let d = m.ncols();
        if d < 2 {
            return Err(Error::invalid("a dataset with a target needs at least two columns"));
        }
        let y = m.column(d - 1).to_owned();
        let x = m.slice(ndarray::s![.., ..d - 1]).to_owned();
        Self::new(x, Some(y))
    }

    pub fn load_csv(path: &Path, has_target: bool, header: bool) -> Result<Self> {
        let ds = Self::from_matrix(read_matrix_csv_file(path, header)?, has_target)?;
        log::info!("loaded {}: n={}, d={}", path.display(), ds.n(), ds.d());
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn column_stats(&self) -> Vec<ColumnStats> {
        self.x
            .columns()
            .into_iter()
            .map(|c| {
                let n = c.len().max(1) as f64;
                let mean = c.sum() / n;
                ColumnStats {
                    min: c.iter().copied().fold(f64::INFINITY, f64::min),
                    max: c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    mean,
                    std: (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt(),
                }
            })
            .collect()
    }

    fn select(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), idx),
            y: self.y.as_ref().map(|y| y.select(Axis(0), idx)),
        }
    }

    /// At most `max_n` rows drawn without replacement, kept in their
    /// original order.
    pub fn subsample(&self, max_n: usize, seed: u64) -> Self {
        if self.n() <= max_n {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, self.n(), max_n).into_vec();
        idx.sort_unstable();
        self.select(&idx)
    }

    /// Shuffled train/test split with `round(fraction·n)` training rows
    /// (at least one row on each side).
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::invalid(format!(
                "split fraction must lie in (0, 1), got {fraction}"
            )));
        }
        let n = self.n();
        if n < 2 {
            return Err(Error::invalid("need at least two rows to split"));
        }
        let n_train = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok((self.select(&idx[..n_train]), self.select(&idx[n_train..])))
    }
}

/// Half-widths `b_j = max_i x_ij - min_i x_ij`, times `box_scale`.
pub fn estimate_box(ds: &Dataset, box_scale: f64) -> Result<BoxBounds> {
    if ds.n() < 2 {
        return Err(Error::invalid(format!(
            "estimating a box needs n >= 2 rows, got {}",
            ds.n()
        )));
    }
    if !(box_scale > 0.0 && box_scale.is_finite()) {
        return Err(Error::invalid(format!("box scale must be positive, got {box_scale}")));
    }
    let b = ds
        .column_stats()
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let range = c.max - c.min;
            if range > 0.0 {
                range
            } else {
                log::warn!("feature {j} is constant; using box width {DEGENERATE_BOX_WIDTH:e}");
                DEGENERATE_BOX_WIDTH
            }
        })
        .collect();
    BoxBounds::new(b)?.scaled(box_scale)
}

/// Standard normal rows.
pub fn synthetic_gaussian(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_simple_fn((n, d), || rng.sample(StandardNormal));
    Dataset { x, y: None }
}

/// Standard normal rows with target `exp(-‖x‖²/2) + N(0, noise²)`.
pub fn synthetic_regression(n: usize, d: usize, noise: f64, seed: u64) -> Dataset {
    let mut ds = synthetic_gaussian(n, d, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7a26_e700_0000);
    let y =
        ds.x.rows()
            .into_iter()
            .map(|r| (-0.5 * r.dot(&r)).exp() + noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
    ds.y = Some(y);
    ds
}

/// Frequency-set constructions compared by experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceKind {
    Mc,
    Halton,
    HaltonScrambled,
    Lattice,
    Global,
    Greedy,
    Weighted,
}

impl SequenceKind {
    pub const ALL: [SequenceKind; 7] = [
        Self::Mc,
        Self::Halton,
        Self::HaltonScrambled,
        Self::Lattice,
        Self::Global,
        Self::Greedy,
        Self::Weighted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mc => "mc",
            Self::Halton => "halton",
            Self::HaltonScrambled => "halton-scrambled",
            Self::Lattice => "lattice",
            Self::Global => "global",
            Self::Greedy => "greedy",
            Self::Weighted => "weighted",
        }
    }

    /// Whether repeated trials draw different frequency sets.
    pub fn is_randomized(self) -> bool {
        matches!(self, Self::Mc)
    }

    pub fn valid_names() -> String {
        Self::ALL.map(Self::name).join(", ")
    }
}

impl fmt::Display for SequenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SequenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownSequence {
                name: s.to_string(),
                valid: Self::valid_names(),
            })
    }
}

/// Build the (possibly weighted) feature map of `kind` with `s` frequencies.
/// Adaptive kinds start from Halton points and optimize on `bounds`.
pub fn build_feature_map(
    kind: SequenceKind,
    s: usize,
    density: &ProductDensity,
    bounds: &BoxBounds,
    seed: u64,
    opts: &OptimizerOptions,
) -> Result<WeightedFeatureMap> {
    let d = density.dim();
    let halton_freqs = || transform(&halton(s, d, false, 1)?, density);
    let freqs = match kind {
        SequenceKind::Mc => transform(&mc_uniform(s, d, seed)?, density)?,
        SequenceKind::Halton => halton_freqs()?,
        SequenceKind::HaltonScrambled => transform(&halton(s, d, true, 1)?, density)?,
        SequenceKind::Lattice => transform(&lattice(s, &korobov_search(s, d))?, density)?,
        SequenceKind::Global => optimize_global(&halton_freqs()?, density, bounds, opts)?.freqs,
        SequenceKind::Greedy => {
            let inner = OptimizerOptions {
                seed: opts.seed,
                ..OptimizerOptions::greedy_inner()
            };
            optimize_greedy(s, density, bounds, 1, &inner)?.freqs
        }
        SequenceKind::Weighted => {
            let freqs = halton_freqs()?;
            let sol = optimize_weights(&freqs, density, bounds)?;
            return WeightedFeatureMap::with_weights(freqs, sol.weights);
        }
    };
    Ok(WeightedFeatureMap::uniform(freqs))
}

/// Experiment settings shared by the Gram sweep and the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kernel: DensityKind,
    pub sigma: f64,
    pub sequences: Vec<SequenceKind>,
    pub s_grid: Vec<usize>,
    pub trials: usize,
    /// Scale applied to the estimated box used by the adaptive optimizers.
    pub box_scale: f64,
    pub lambda: f64,
    pub split: f64,
    pub seed: u64,
    pub max_iters: usize,
    pub max_n: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kernel: DensityKind::Gaussian,
            sigma: 1.0,
            sequences: vec![SequenceKind::Mc, SequenceKind::Halton],
            s_grid: vec![64, 128, 256, 512],
            trials: 10,
            box_scale: 1.0,
            lambda: 1e-3,
            split: 0.8,
            seed: 0,
            max_iters: OptimizerOptions::default().max_iters,
            max_n: 2000,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sequences.is_empty() {
            return Err(Error::invalid("no sequences selected"));
        }
        if self.s_grid.is_empty() || self.s_grid.contains(&0) {
            return Err(Error::invalid("s grid must be non-empty with positive entries"));
        }
        if self.s_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("s grid must be strictly ascending"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::invalid("split must lie in (0, 1)"));
        }
        for (name, v) in [
            ("sigma", self.sigma),
            ("lambda", self.lambda),
            ("box_scale", self.box_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_n < 2 {
            return Err(Error::invalid("max_n must be at least 2"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn density(&self, d: usize) -> Result<ProductDensity> {
        ProductDensity::isotropic(self.kernel, self.sigma, d)
    }

    fn optimizer_options(&self) -> OptimizerOptions {
        OptimizerOptions {
            max_iters: self.max_iters,
            seed: self.seed,
            ..Default::default()
        }
    }
}

/// Seed of one trial in one grid cell; independent of scheduling.
pub fn cell_seed(base: u64, cell: usize, trial: usize) -> u64 {
    let mut z = base ^ (cell as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (trial as u64).rotate_left(32);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct TrialResult {
    spectral: f64,
    frobenius: f64,
    d2_full: Option<f64>,
    d2_half: Option<f64>,
    krr_error: Option<f64>,
}

struct CellResult {
    kind: SequenceKind,
    s: usize,
    trials: Vec<TrialResult>,
}

struct Prepared {
    density: ProductDensity,
    data: Dataset,
    full_box: BoxBounds,
    opt_box: BoxBounds,
    exact: Array2<f64>,
    krr_split: Option<(Dataset, Dataset)>,
}

fn prepare(cfg: &ExperimentConfig, ds: &Dataset, with_krr: bool) -> Result<Prepared> {
    cfg.validate()?;
    let data = ds.subsample(cfg.max_n, cfg.seed);
    let density = cfg.density(data.d())?;
    let full_box = estimate_box(&data, 1.0)?;
    let opt_box = full_box.scaled(cfg.box_scale)?;
    let exact = gram_exact(&density, data.x.view())?;
    let krr_split = match (&data.y, with_krr) {
        (Some(_), true) => Some(data.split(cfg.split, cfg.seed)?),
        _ => None,
    };
    Ok(Prepared {
        density,
        data,
        full_box,
        opt_box,
        exact,
        krr_split,
    })
}

fn discrepancy_of(map: &WeightedFeatureMap, density: &ProductDensity, bounds: &BoxBounds) -> Option<f64> {
    let uniform = map.weights.iter().all(|&w| w == map.weights[0]);
    let res = if uniform {
        box_discrepancy(&map.freqs, density, bounds).map(|r| r.d_squared)
    } else {
        weighted_discrepancy(&map.freqs, map.weights.view(), density, bounds)
    };
    res.ok()
}

fn run_cells(cfg: &ExperimentConfig, prep: &Prepared, with_extras: bool) -> Result<Vec<CellResult>> {
    let opts = cfg.optimizer_options();
    let half_box = prep.full_box.scaled(0.5)?;
    let cells: Vec<(usize, SequenceKind, usize)> = cfg
        .sequences
        .iter()
        .flat_map(|&k| cfg.s_grid.iter().map(move |&s| (k, s)))
        .enumerate()
        .map(|(i, (k, s))| (i, k, s))
        .collect();
    cells
        .par_iter()
        .map(|&(cell, kind, s)| {
            let n_trials = if kind.is_randomized() { cfg.trials } else { 1 };
            let trials = (0..n_trials)
                .into_par_iter()
                .map(|t| {
                    let seed = cell_seed(cfg.seed, cell, t);
                    let map = build_feature_map(kind, s, &prep.density, &prep.opt_box, seed, &opts)?;
                    let approx = gram_approx(&map, prep.data.x.view())?;
                    let (spectral, frobenius) = relative_errors(prep.exact.view(), approx.view())?;
                    let mut out = TrialResult {
                        spectral,
                        frobenius,
                        d2_full: None,
                        d2_half: None,
                        krr_error: None,
                    };
                    if with_extras {
                        out.d2_full = discrepancy_of(&map, &prep.density, &prep.full_box);
                        out.d2_half = discrepancy_of(&map, &prep.density, &half_box);
                        if let Some((train, test)) = &prep.krr_split {
                            let z_train = map.real_feature_matrix(train.x.view())?;
                            let y_train = train.y.as_ref().expect("split of a dataset with target");
                            let beta = krr_train(z_train.view(), y_train.view(), cfg.lambda)?;
                            let pred = krr_predict(beta.view(), map.real_feature_matrix(test.x.view())?.view())?;
                            let y_test = test.y.as_ref().expect("split of a dataset with target");
                            out.krr_error = Some(regression_error(pred.view(), y_test.view())?);
                        }
                    }
                    Ok(out)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CellResult { kind, s, trials })
        })
        .collect()
}

fn gram_report(cell: &CellResult) -> GramErrorReport {
    GramErrorReport {
        sequence: cell.kind.name().to_string(),
        s: cell.s,
        trials: cell.trials.len(),
        relative_spectral: Summary::from_values(cell.trials.iter().map(|t| t.spectral).collect()),
        relative_frobenius: Summary::from_values(cell.trials.iter().map(|t| t.frobenius).collect()),
    }
}

/// Relative Gram errors for every sequence and feature count in `cfg`.
/// Randomized sequences run `cfg.trials` times; deterministic ones once.
pub fn run_gram_experiment(cfg: &ExperimentConfig, ds: &Dataset) -> Result<Vec<GramErrorReport>> {
    let prep = prepare(cfg, ds, false)?;
    Ok(run_cells(cfg, &prep, false)?.iter().map(gram_report).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyRow {
    pub sequence: String,
    pub s: usize,
    /// Mean squared discrepancy on the estimated box; absent when it cannot
    /// be evaluated for the kernel and dimension.
    pub full_box: Option<f64>,
    /// Same on the box scaled by one half.
    pub half_box: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrrRow {
    pub sequence: String,
    pub s: usize,
    pub test_error: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrrSection {
    pub n_train: usize,
    pub n_test: usize,
    pub exact_kernel_test_error: f64,
    pub rows: Vec<KrrRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub n: usize,
    pub d: usize,
    pub box_b: Vec<f64>,
    pub gram: Vec<GramErrorReport>,
    pub discrepancy: Vec<DiscrepancyRow>,
    pub krr: Option<KrrSection>,
    /// Spearman rank correlation between the half-box discrepancy and the
    /// mean relative Frobenius error across all cells.
    pub spearman_half_box_vs_frobenius: Option<f64>,
}

impl PipelineReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty())
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Run every configured sequence through features, Gram errors,
/// discrepancies and (when the dataset has a target) ridge regression.
pub fn run_pipeline(cfg: &ExperimentConfig, ds: &Dataset) -> Result<PipelineReport> {
    let prep = prepare(cfg, ds, true)?;
    let cells = run_cells(cfg, &prep, true)?;

    let gram: Vec<GramErrorReport> = cells.iter().map(gram_report).collect();
    let discrepancy: Vec<DiscrepancyRow> = cells
        .iter()
        .map(|c| DiscrepancyRow {
            sequence: c.kind.name().to_string(),
            s: c.s,
            full_box: mean_of(c.trials.iter().map(|t| t.d2_full)),
            half_box: mean_of(c.trials.iter().map(|t| t.d2_half)),
        })
        .collect();

    let krr = match &prep.krr_split {
        Some((train, test)) => {
            let exact = ExactKrr::train(
                &prep.density,
                train.x.view(),
                train.y.as_ref().expect("target present").view(),
                cfg.lambda,
            )?;
            let pred = exact.predict(test.x.view())?;
            Some(KrrSection {
                n_train: train.n(),
                n_test: test.n(),
                exact_kernel_test_error: regression_error(
                    pred.view(),
                    test.y.as_ref().expect("target present").view(),
                )?,
                rows: cells
                    .iter()
                    .map(|c| KrrRow {
                        sequence: c.kind.name().to_string(),
                        s: c.s,
                        test_error: Summary::from_values(c.trials.iter().filter_map(|t| t.krr_error).collect()),
                    })
                    .collect(),
            })
        }
        None => None,
    };

    let pairs: Vec<(f64, f64)> = discrepancy
        .iter()
        .zip(&gram)
        .filter_map(|(d, g)| d.half_box.map(|h| (h, g.relative_frobenius.mean)))
        .collect();
    let spearman_half_box_vs_frobenius = if pairs.len() >= 3 {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        spearman(&a, &b)
    } else {
        None
    };

    Ok(PipelineReport {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        n: prep.data.n(),
        d: prep.data.d(),
        box_b: prep.full_box.b.clone(),
        gram,
        discrepancy,
        krr,
        spearman_half_box_vs_frobenius,
    })
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; `None` for mismatched lengths, fewer than two
/// values, or a constant input.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}
