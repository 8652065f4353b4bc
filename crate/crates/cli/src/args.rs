use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "qrff",
    version,
    about = "Quasi-random and adaptive Fourier feature experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a unit-cube point set.
    Generate(GenerateArgs),
    /// Map unit-cube points to frequencies through the kernel's spectral density.
    Transform(TransformArgs),
    /// Squared box discrepancy of a frequency set.
    Discrepancy(DiscrepancyArgs),
    /// Adaptive frequency sets: global, greedy, or weighted.
    Optimize(OptimizeArgs),
    /// Relative Gram-matrix approximation errors on a dataset.
    GramError(GramErrorArgs),
    /// Ridge regression on Fourier features.
    Krr(KrrArgs),
    /// Monte Carlo check of the average-case integration error identity.
    AvgcaseCheck(AvgcaseArgs),
    /// End-to-end experiment report.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SeqArg {
    Halton,
    HaltonScrambled,
    Lattice,
    Mc,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Gaussian,
    Laplacian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Global,
    Greedy,
    Weights,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Halton,
    File,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long = "out", value_enum, default_value = "json")]
    pub format: OutFormat,
    /// Write to this file instead of stdout.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    #[arg(long, value_enum, default_value = "halton")]
    pub seq: SeqArg,
    /// Number of points.
    #[arg(long)]
    pub s: Option<usize>,
    /// Dimension; defaults to the length of --sigma or --b when those are vectors.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// First Halton index.
    #[arg(long, default_value_t = 1)]
    pub start: u64,
    /// Point file for --seq file (CSV, one point per row).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub header: bool,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kernel: KernelArg,
    /// Bandwidth; one value for all dimensions or a comma-separated list.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub sigma: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct BoxArgs {
    /// Box half-widths; one value or a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    pub b: Option<Vec<f64>>,
    /// Estimate the box from the feature ranges of this CSV instead.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub box_scale: f64,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DiscrepancyArgs {
    /// Frequency set CSV; without it frequencies are generated from --seq.
    #[arg(long)]
    pub freqs: Option<PathBuf>,
    /// Optional nonnegative weights, one per line.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub bbox: BoxArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long, value_enum, default_value = "global")]
    pub mode: Mode,
    #[arg(long, value_enum, default_value = "halton")]
    pub init: InitArg,
    /// Number of frequencies.
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Initial frequency set for --init file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,
    #[arg(long)]
    pub header: bool,
    /// Also write the final frequency set as CSV here.
    #[arg(long)]
    pub points_out: Option<PathBuf>,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub bbox: BoxArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset CSV (comma separated, no header unless --header).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub header: bool,
    /// Use a synthetic dataset of N standard normal rows in D dimensions.
    #[arg(long, value_names = ["N", "D"], num_args = 2, conflicts_with = "data")]
    pub synthetic: Option<Vec<usize>>,
    #[arg(long, default_value_t = 2000)]
    pub max_n: usize,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Sequences to compare (mc, halton, halton-scrambled, lattice, global, greedy, weighted).
    #[arg(long, value_delimiter = ',', default_value = "mc,halton")]
    pub seq: Vec<String>,
    /// Feature counts, ascending.
    #[arg(long, value_delimiter = ',', default_value = "64,128,256,512")]
    pub s: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub box_scale: f64,
    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,
}

#[derive(Debug, Args)]
pub struct GramErrorArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kernel: KernelArg,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct KrrArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kernel: KernelArg,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lambda: f64,
    /// Training fraction.
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    /// Noise level of the synthetic target exp(-|x|^2/2) + noise.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct AvgcaseArgs {
    #[arg(long)]
    pub freqs: Option<PathBuf>,
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub bbox: BoxArgs,
    #[arg(long, default_value_t = 200_000)]
    pub samples: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Experiment configuration as JSON; flags below are ignored when given.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Treat the last CSV column as a regression target.
    #[arg(long)]
    pub target: bool,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kernel: KernelArg,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}
