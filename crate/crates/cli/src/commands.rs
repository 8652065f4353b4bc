use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use qrff_core::adaptive::{optimize_global, optimize_greedy, optimize_weights, OptimizerOptions};
use qrff_core::discrepancy::{average_case_mc_check, box_discrepancy, weighted_discrepancy};
use qrff_core::experiment::{synthetic_gaussian, synthetic_regression, KrrRow};
use qrff_core::io::{read_matrix_csv_file, write_matrix_csv, write_matrix_csv_file};
use qrff_core::krr::{krr_predict, krr_train, regression_error, ExactKrr};
use qrff_core::sequences::{halton, korobov_search, lattice, mc_uniform};
use qrff_core::{
    estimate_box, run_gram_experiment, run_pipeline, transform, BoxBounds, Dataset, DensityKind, Error,
    ExperimentConfig, FrequencySet, Generator, PointSetEnvelope, ProductDensity, SequenceKind, Summary, UnitPointSet,
    WeightedFeatureMap,
};

use crate::args::*;

/// A failed command, classified for the process exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Core(e) if e.is_numerical() => 4,
            Failure::Core(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(msg) => write!(f, "usage: {msg}"),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate(a) => generate(a),
        Command::Transform(a) => transform_cmd(a),
        Command::Discrepancy(a) => discrepancy(a),
        Command::Optimize(a) => optimize(a),
        Command::GramError(a) => gram_error(a),
        Command::Krr(a) => krr(a),
        Command::AvgcaseCheck(a) => avgcase(a),
        Command::Pipeline(a) => pipeline(a),
    }
}

fn sink(output: &OutputArgs) -> Result<Box<dyn Write>> {
    Ok(match &output.output {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json<T: Serialize>(output: &OutputArgs, value: &T) -> Result<()> {
    let mut w = sink(output)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn emit_points(output: &OutputArgs, env: &PointSetEnvelope, m: &Array2<f64>) -> Result<()> {
    match output.format {
        OutFormat::Json => emit_json(output, env),
        OutFormat::Csv => Ok(write_matrix_csv(sink(output)?, m.view())?),
    }
}

fn emit_table(output: &OutputArgs, header: &str, rows: &[String]) -> Result<()> {
    let mut w = sink(output)?;
    writeln!(w, "{header}")?;
    for r in rows {
        writeln!(w, "{r}")?;
    }
    w.flush()?;
    Ok(())
}

/// Broadcast a one-element list to `d` entries.
fn expand(values: &[f64], d: usize, flag: &str) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; d]),
        n if n == d => Ok(values.to_vec()),
        n => Err(usage(format!("--{flag} has {n} values but the dimension is {d}"))),
    }
}

fn vector_dim(lists: &[Option<&[f64]>]) -> Option<usize> {
    lists.iter().flatten().map(|l| l.len()).find(|&n| n > 1)
}

fn density(k: &KernelArgs, d: usize) -> Result<ProductDensity> {
    let kind = kernel_kind(k.kernel);
    Ok(ProductDensity::new(kind, expand(&k.sigma, d, "sigma")?)?)
}

fn kernel_kind(k: KernelArg) -> DensityKind {
    match k {
        KernelArg::Gaussian => DensityKind::Gaussian,
        KernelArg::Laplacian => DensityKind::Cauchy,
    }
}

fn unit_points(src: &SourceArgs, d: Option<usize>) -> Result<UnitPointSet> {
    if src.seq == SeqArg::File {
        return Err(usage("--seq file reads points from --input; it cannot generate"));
    }
    let s = src.s.ok_or_else(|| usage("--s is required"))?;
    let d = src.d.or(d).ok_or_else(|| usage("--d is required"))?;
    Ok(match src.seq {
        SeqArg::Halton => halton(s, d, false, src.start)?,
        SeqArg::HaltonScrambled => halton(s, d, true, src.start)?,
        SeqArg::Lattice => lattice(s, &korobov_search(s, d))?,
        SeqArg::Mc => mc_uniform(s, d, src.seed)?,
        SeqArg::File => unreachable!("handled above"),
    })
}

fn read_points(path: &Path, header: bool) -> Result<Array2<f64>> {
    Ok(read_matrix_csv_file(path, header)?)
}

fn generate(a: GenerateArgs) -> Result<()> {
    let set = unit_points(&a.source, None)?;
    emit_points(&a.output, &PointSetEnvelope::from(&set), &set.points)
}

/// Frequencies from a CSV or generated from the source flags.
fn frequencies(
    freqs: Option<&Path>,
    src: &SourceArgs,
    k: &KernelArgs,
    d_hint: Option<usize>,
) -> Result<(FrequencySet, ProductDensity)> {
    if let Some(path) = freqs {
        let m = read_points(path, src.header)?;
        let p = density(k, m.ncols())?;
        return Ok((FrequencySet::new(m, path.display().to_string())?, p));
    }
    if src.seq == SeqArg::File {
        let path = src.input.as_ref().ok_or_else(|| usage("--seq file needs --input"))?;
        let unit = UnitPointSet {
            generator: Generator::Mc,
            seed_or_start: 0,
            points: read_points(path, src.header)?,
        };
        let p = density(k, unit.dim())?;
        let mut freqs = transform(&unit, &p)?;
        freqs.provenance = format!("file({})", path.display());
        return Ok((freqs, p));
    }
    let unit = unit_points(src, d_hint)?;
    let p = density(k, unit.dim())?;
    Ok((transform(&unit, &p)?, p))
}

fn transform_cmd(a: TransformArgs) -> Result<()> {
    let d_hint = vector_dim(&[Some(&a.kernel.sigma)]);
    let (freqs, _) = frequencies(None, &a.source, &a.kernel, d_hint)?;
    emit_points(&a.output, &PointSetEnvelope::from(&freqs), &freqs.points)
}

fn bounds(bx: &BoxArgs, d: usize, header: bool) -> Result<BoxBounds> {
    let b = match (&bx.b, &bx.data) {
        (Some(b), None) => BoxBounds::new(expand(b, d, "b")?)?,
        (None, Some(path)) => {
            let ds = Dataset::load_csv(path, false, header)?;
            if ds.d() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: ds.d(),
                }
                .into());
            }
            estimate_box(&ds, 1.0)?
        }
        (Some(_), Some(_)) => return Err(usage("give either --b or --data, not both")),
        (None, None) => return Err(usage("a box is required: pass --b or --data")),
    };
    Ok(b.scaled(bx.box_scale)?)
}

fn discrepancy(a: DiscrepancyArgs) -> Result<()> {
    let d_hint = vector_dim(&[Some(&a.kernel.sigma), a.bbox.b.as_deref()]);
    let (freqs, p) = frequencies(a.freqs.as_deref(), &a.source, &a.kernel, d_hint)?;
    let b = bounds(&a.bbox, freqs.dim(), a.source.header)?;
    if let Some(wpath) = &a.weights {
        let w = read_points(wpath, false)?;
        if w.ncols() != 1 {
            return Err(usage("--weights must have one value per line"));
        }
        let w = w.column(0).to_owned();
        let d2 = weighted_discrepancy(&freqs, w.view(), &p, &b)?;
        #[derive(Serialize)]
        struct Weighted {
            d_squared: f64,
            s: usize,
            d: usize,
        }
        let out = Weighted {
            d_squared: d2,
            s: freqs.len(),
            d: freqs.dim(),
        };
        return match a.output.format {
            OutFormat::Json => emit_json(&a.output, &out),
            OutFormat::Csv => emit_table(
                &a.output,
                "d_squared,s,d",
                &[format!("{},{},{}", out.d_squared, out.s, out.d)],
            ),
        };
    }
    let r = box_discrepancy(&freqs, &p, &b)?;
    match a.output.format {
        OutFormat::Json => emit_json(&a.output, &r),
        OutFormat::Csv => emit_table(
            &a.output,
            "d_squared,term1,term2,term3,s,d",
            &[format!(
                "{},{},{},{},{},{}",
                r.d_squared, r.term1, r.term2, r.term3, r.s, r.d
            )],
        ),
    }
}

fn optimize(a: OptimizeArgs) -> Result<()> {
    let init = match a.init {
        InitArg::File => {
            let path = a.input.as_ref().ok_or_else(|| usage("--init file needs --input"))?;
            Some(read_points(path, a.header)?)
        }
        InitArg::Halton => None,
    };
    let d = match &init {
        Some(m) => m.ncols(),
        None => {
            a.d.or_else(|| vector_dim(&[Some(&a.kernel.sigma), a.bbox.b.as_deref()]))
                .ok_or_else(|| usage("--d is required"))?
        }
    };
    let p = density(&a.kernel, d)?;
    let b = bounds(&a.bbox, d, a.header)?;
    let opts = OptimizerOptions::default().with_max_iters(a.max_iters);
    let start = || -> Result<FrequencySet> {
        match &init {
            Some(m) => Ok(FrequencySet::new(m.clone(), "file")?),
            None => {
                let s = a.s.ok_or_else(|| usage("--s is required"))?;
                Ok(transform(&halton(s, d, false, 1)?, &p)?)
            }
        }
    };
    let trace = match a.mode {
        Mode::Global => optimize_global(&start()?, &p, &b, &opts)?,
        Mode::Greedy => {
            if init.is_some() {
                return Err(usage("greedy mode always starts from Halton points"));
            }
            let s = a.s.ok_or_else(|| usage("--s is required"))?;
            let inner = OptimizerOptions {
                max_iters: a.max_iters.max(1),
                ..OptimizerOptions::greedy_inner()
            };
            optimize_greedy(s, &p, &b, 1, &inner)?
        }
        Mode::Weights => {
            let freqs = start()?;
            let sol = optimize_weights(&freqs, &p, &b)?;
            if let Some(path) = &a.points_out {
                write_matrix_csv_file(path, freqs.points.view())?;
            }
            if a.output.format == OutFormat::Csv {
                let w = sol.weights.clone().insert_axis(ndarray::Axis(1));
                return Ok(write_matrix_csv(sink(&a.output)?, w.view())?);
            }
            return emit_json(&a.output, &sol);
        }
    };
    if let Some(path) = &a.points_out {
        write_matrix_csv_file(path, trace.freqs.points.view())?;
    }
    match a.output.format {
        OutFormat::Json => emit_json(&a.output, &trace),
        OutFormat::Csv => Ok(write_matrix_csv(sink(&a.output)?, trace.freqs.points.view())?),
    }
}

fn load_dataset(data: &DataArgs, has_target: bool, noise: f64, seed: u64) -> Result<Dataset> {
    match (&data.data, &data.synthetic) {
        (Some(path), _) => Ok(Dataset::load_csv(path, has_target, data.header)?),
        (None, Some(nd)) => {
            let (n, d) = (nd[0], nd[1]);
            Ok(if has_target {
                synthetic_regression(n, d, noise, seed)
            } else {
                synthetic_gaussian(n, d, seed)
            })
        }
        (None, None) => Err(usage("a dataset is required: pass --data or --synthetic N D")),
    }
}

fn parse_sequences(names: &[String]) -> Result<Vec<SequenceKind>> {
    Ok(names
        .iter()
        .map(|n| n.parse())
        .collect::<std::result::Result<_, Error>>()?)
}

fn config(grid: &GridArgs, kernel: KernelArg, sigma: f64, max_n: usize) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig {
        kernel: kernel_kind(kernel),
        sigma,
        sequences: parse_sequences(&grid.seq)?,
        s_grid: grid.s.clone(),
        trials: grid.trials,
        box_scale: grid.box_scale,
        seed: grid.seed,
        max_iters: grid.max_iters,
        max_n,
        ..Default::default()
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn gram_error(a: GramErrorArgs) -> Result<()> {
    let cfg = config(&a.grid, a.kernel, a.sigma, a.data.max_n)?;
    let ds = load_dataset(&a.data, false, 0.0, cfg.seed)?;
    let reports = run_gram_experiment(&cfg, &ds)?;
    match a.output.format {
        OutFormat::Json => emit_json(&a.output, &reports),
        OutFormat::Csv => emit_table(
            &a.output,
            "sequence,s,trials,spectral_mean,spectral_std,frobenius_mean,frobenius_std",
            &reports
                .iter()
                .map(|r| {
                    format!(
                        "{},{},{},{},{},{},{}",
                        r.sequence,
                        r.s,
                        r.trials,
                        r.relative_spectral.mean,
                        r.relative_spectral.std,
                        r.relative_frobenius.mean,
                        r.relative_frobenius.std
                    )
                })
                .collect::<Vec<_>>(),
        ),
    }
}

#[derive(Serialize)]
struct KrrReport {
    lambda: f64,
    n_train: usize,
    n_test: usize,
    exact_kernel_test_error: f64,
    rows: Vec<KrrRow>,
}

fn krr(a: KrrArgs) -> Result<()> {
    let mut cfg = config(&a.grid, a.kernel, a.sigma, a.data.max_n)?;
    cfg.lambda = a.lambda;
    cfg.split = a.split;
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let ds = load_dataset(&a.data, true, a.noise, cfg.seed)?.subsample(cfg.max_n, cfg.seed);
    let (train, test) = ds.split(cfg.split, cfg.seed)?;
    let ytr = train.y.clone().expect("dataset loaded with target");
    let yte = test.y.clone().expect("dataset loaded with target");
    let p = cfg.density(ds.d())?;
    let b = estimate_box(&ds, cfg.box_scale)?;
    let opts = OptimizerOptions::default().with_max_iters(cfg.max_iters);

    let exact = ExactKrr::train(&p, train.x.view(), ytr.view(), cfg.lambda)?;
    let exact_err = regression_error(exact.predict(test.x.view())?.view(), yte.view())?;

    let mut rows = Vec::new();
    for (si, &kind) in cfg.sequences.iter().enumerate() {
        for (ki, &s) in cfg.s_grid.iter().enumerate() {
            let n_trials = if kind.is_randomized() { cfg.trials } else { 1 };
            let errors = (0..n_trials)
                .map(|t| {
                    let seed = qrff_core::experiment::cell_seed(cfg.seed, si * cfg.s_grid.len() + ki, t);
                    let map: WeightedFeatureMap =
                        qrff_core::experiment::build_feature_map(kind, s, &p, &b, seed, &opts)?;
                    let beta = krr_train(map.real_feature_matrix(train.x.view())?.view(), ytr.view(), cfg.lambda)?;
                    let pred = krr_predict(beta.view(), map.real_feature_matrix(test.x.view())?.view())?;
                    regression_error(pred.view(), yte.view())
                })
                .collect::<std::result::Result<Vec<f64>, Error>>()?;
            rows.push(KrrRow {
                sequence: kind.name().to_string(),
                s,
                test_error: Summary::from_values(errors),
            });
        }
    }
    let report = KrrReport {
        lambda: cfg.lambda,
        n_train: train.n(),
        n_test: test.n(),
        exact_kernel_test_error: exact_err,
        rows,
    };
    match a.output.format {
        OutFormat::Json => emit_json(&a.output, &report),
        OutFormat::Csv => {
            let mut lines = vec![format!("exact,0,1,{},0", report.exact_kernel_test_error)];
            lines.extend(report.rows.iter().map(|r| {
                format!(
                    "{},{},{},{},{}",
                    r.sequence,
                    r.s,
                    r.test_error.values.len(),
                    r.test_error.mean,
                    r.test_error.std
                )
            }));
            emit_table(&a.output, "sequence,s,trials,test_error_mean,test_error_std", &lines)
        }
    }
}

fn avgcase(a: AvgcaseArgs) -> Result<()> {
    let d_hint = vector_dim(&[Some(&a.kernel.sigma), a.bbox.b.as_deref()]);
    let (freqs, p) = frequencies(a.freqs.as_deref(), &a.source, &a.kernel, d_hint)?;
    let b = bounds(&a.bbox, freqs.dim(), a.source.header)?;
    let chk = average_case_mc_check(&freqs, &p, &b, a.samples, a.source.seed)?;
    match a.output.format {
        OutFormat::Json => emit_json(&a.output, &chk),
        OutFormat::Csv => emit_table(
            &a.output,
            "empirical,predicted,std_error,z_score,d_squared,n_samples",
            &[format!(
                "{},{},{},{},{},{}",
                chk.empirical,
                chk.predicted,
                chk.std_error,
                chk.z_score(),
                chk.d_squared,
                chk.n_samples
            )],
        ),
    }
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(path) => {
            let cfg: ExperimentConfig = serde_json::from_reader(File::open(path)?).map_err(Error::from)?;
            cfg.validate()?;
            cfg
        }
        None => {
            let mut cfg = config(&a.grid, a.kernel, a.sigma, a.data.max_n)?;
            cfg.lambda = a.lambda;
            cfg.split = a.split;
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            cfg
        }
    };
    let has_target = a.target || a.data.synthetic.is_some();
    let ds = load_dataset(&a.data, has_target, a.noise, cfg.seed)?;
    let report = run_pipeline(&cfg, &ds)?;
    if a.output.format == OutFormat::Csv {
        let rows: Vec<String> = report
            .gram
            .iter()
            .zip(&report.discrepancy)
            .map(|(g, d)| {
                let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                format!(
                    "{},{},{},{},{},{}",
                    g.sequence,
                    g.s,
                    g.relative_spectral.mean,
                    g.relative_frobenius.mean,
                    opt(d.full_box),
                    opt(d.half_box)
                )
            })
            .collect();
        return emit_table(
            &a.output,
            "sequence,s,spectral_mean,frobenius_mean,d2_full_box,d2_half_box",
            &rows,
        );
    }
    let mut w = sink(&a.output)?;
    writeln!(w, "{}", report.to_json()?)?;
    w.flush()?;
    Ok(())
}
