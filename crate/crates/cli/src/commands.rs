//! Command-line surface and the command implementations.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use clsketch::decoder::{cl_ompr_with_report, extract_hypothesis, DecoderOptions};
use clsketch::sketch::{load_sketch, save_sketch};
use clsketch::tasks::{
    adjusted_rand_index, em_baseline, gen_synthetic, load_dataset, lloyd_baseline, save_dataset, Dataset, EmOptions,
    Hypothesis, SyntheticSpec, Task,
};
use clsketch::theory::{defect_pass_rate, theory_report, AmbientSpace, SeparatedDiracSampler, TheoryConfig, TheoryReport};
use clsketch::{sketch_dataset, GaussianKernel};

use crate::error::{CliError, CliResult};
use crate::pipeline::{build_map, task_risk, MapKind, MapSpec, SamplingKind, SketchSize, TaskKind};
use crate::sweep::{chart, rows_csv, run_sweep, summarize, summary_csv, SweepConfig};

#[derive(Debug, Parser)]
#[command(name = "clsketch", version, about = "Compressive learning from Nyström and random Fourier feature sketches")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic Gaussian-mixture dataset.
    Gen(GenArgs),
    /// Build a feature map and sketch a dataset in one pass.
    Sketch(SketchArgs),
    /// Decode a hypothesis from a sketch file alone.
    Learn(LearnArgs),
    /// Evaluate a hypothesis on a dataset.
    Eval(EvalArgs),
    /// Sketch-and-learn over a grid of families, sketch sizes and kernel variances.
    Sweep(SweepArgs),
    /// Spectral diagnostics of the landmark-count requirements.
    Theory(TheoryArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    #[arg(long, default_value_t = 2.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct SizeArgs {
    /// Sketch size.
    #[arg(long, conflicts_with = "m_over_p")]
    pub m: Option<usize>,
    /// Sketch size as a multiple of p = 2kd.
    #[arg(long)]
    pub m_over_p: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SketchArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = MapKind::Nystrom)]
    pub map: MapKind,
    #[arg(long, value_enum, default_value_t = SamplingKind::Uniform)]
    pub sampling: SamplingKind,
    /// Task whose default kernel variance applies when --sigma-sq is absent.
    #[arg(long, value_enum, default_value_t = TaskKind::Kmeans)]
    pub task: TaskKind,
    #[arg(long)]
    pub sigma_sq: Option<f64>,
    /// Number of clusters; needed to resolve --m-over-p.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[command(flatten)]
    pub size: SizeArgs,
    /// Regularization of the leverage scores.
    #[arg(long, default_value_t = 1e-3)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[arg(long)]
    pub sketch: PathBuf,
    #[arg(long, value_enum, default_value_t = TaskKind::Kmeans)]
    pub task: TaskKind,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub hypothesis: PathBuf,
    /// Require labels and report the adjusted Rand index.
    #[arg(long)]
    pub ari: bool,
    /// Restarts of the Lloyd or EM reference solver; 0 skips it.
    #[arg(long, default_value_t = 0)]
    pub baseline_restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Append the CSV row to this file instead of printing it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Dataset file; a synthetic dataset is generated when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    #[arg(long, default_value_t = 2.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    #[arg(long, value_enum, default_value_t = TaskKind::Kmeans)]
    pub task: TaskKind,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MapKind::Nystrom, MapKind::Rff])]
    pub map: Vec<MapKind>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [SamplingKind::Uniform])]
    pub sampling: Vec<SamplingKind>,
    #[arg(long, value_delimiter = ',')]
    pub sigma_sq: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, value_delimiter = ',', conflicts_with = "m_over_p")]
    pub m: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub m_over_p: Vec<f64>,
    #[arg(long, default_value_t = 1e-3)]
    pub lambda: f64,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for sweep.csv, summary.csv and sweep.svg.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 81.0)]
    pub sigma_sq: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    pub lambda: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Leverage-score approximation factor.
    #[arg(long, default_value_t = 1.0)]
    pub z: f64,
    /// Uniform landmark draws used for the projection-defect pass rate.
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Mixture pairs drawn by the secant probe; 0 skips it.
    #[arg(long, default_value_t = 0)]
    pub probe_trials: usize,
    /// Atoms per probed mixture.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Half the minimal center separation of probed mixtures.
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Source-condition exponent in (0, 1/2).
    #[arg(long)]
    pub source_s: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Sketch(a) => cmd_sketch(&a),
        Command::Learn(a) => cmd_learn(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Theory(a) => cmd_theory(&a),
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read_dataset(path: &Path) -> CliResult<Dataset> {
    load_dataset(path).map_err(|e| match CliError::from(e) {
        CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn cmd_gen(a: &GenArgs) -> CliResult<String> {
    let spec = SyntheticSpec { k: a.k, d: a.d, n: a.n, separation: a.separation, seed: a.seed };
    let ds = gen_synthetic(&spec)?;
    save_dataset(&a.out, &ds).map_err(|e| CliError::Io(format!("{}: {e}", a.out.display())))?;
    Ok(format!("wrote {}: n={} d={} k={} s={} seed={}", a.out.display(), a.n, a.d, a.k, a.separation, a.seed))
}

fn sketch_size(size: &SizeArgs) -> CliResult<SketchSize> {
    match (size.m, size.m_over_p) {
        (Some(m), None) => Ok(SketchSize::Absolute(m)),
        (None, Some(r)) => Ok(SketchSize::PerParameter(r)),
        (None, None) => Err(CliError::Argument("one of --m or --m-over-p is required".into())),
        (Some(_), Some(_)) => Err(CliError::Argument("--m and --m-over-p are exclusive".into())),
    }
}

pub fn cmd_sketch(a: &SketchArgs) -> CliResult<String> {
    let ds = read_dataset(&a.data)?;
    let m = sketch_size(&a.size)?.resolve(a.k, ds.dim())?;
    let spec = MapSpec {
        map: a.map,
        sampling: a.sampling,
        sigma_sq: a.sigma_sq.unwrap_or(a.task.default_sigma_sq()),
        m,
        lambda: a.lambda,
        seed: a.seed,
    };
    let start = std::time::Instant::now();
    let map = build_map(&ds.rows, &spec)?;
    let sketch = sketch_dataset(&map, &ds.rows)?;
    log::info!("sketched {} rows into m={} in {:.3}s", ds.n(), map.dim(), start.elapsed().as_secs_f64());
    save_sketch(&a.out, &sketch, &map).map_err(|e| CliError::Io(format!("{}: {e}", a.out.display())))?;
    Ok(format!("wrote {}: map={} m={} fingerprint={:016x}", a.out.display(), a.map.name(), map.dim(), sketch.fingerprint()))
}

/// Only the sketch file is read: decoding never touches the dataset.
pub fn cmd_learn(a: &LearnArgs) -> CliResult<String> {
    let (sketch, map) = load_sketch(&a.sketch).map_err(|e| match CliError::from(e) {
        CliError::Io(m) => CliError::Io(format!("{}: {m}", a.sketch.display())),
        other => other,
    })?;
    let opts = DecoderOptions::new(a.k).with_seed(a.seed);
    let (mixture, report) = cl_ompr_with_report(&sketch, &map, a.task.family(), &opts)?;
    let h = extract_hypothesis(&mixture, a.task.task())?;
    log::info!("final residual {:e}", report.residual);
    write(&a.out, h.to_table())?;
    Ok(format!("wrote {}: task={} k={} residual={:e}", a.out.display(), h.task().name(), h.k(), report.residual))
}

pub const EVAL_HEADER: &str = "task,k,risk,ari,baseline_risk";

pub fn cmd_eval(a: &EvalArgs) -> CliResult<String> {
    let ds = read_dataset(&a.data)?;
    let text = fs::read_to_string(&a.hypothesis).map_err(|e| CliError::Io(format!("{}: {e}", a.hypothesis.display())))?;
    let h = Hypothesis::from_table(&text).map_err(|e| CliError::Io(format!("{}: {e}", a.hypothesis.display())))?;
    let risk = task_risk(&ds.rows, &h)?;
    let ari = match (&ds.labels, a.ari) {
        (Some(truth), _) => Some(adjusted_rand_index(&h.assign(&ds.rows)?, truth)?),
        (None, true) => return Err(CliError::Argument("--ari needs a labeled dataset".into())),
        (None, false) => None,
    };
    let baseline = if a.baseline_restarts > 0 {
        let b = match h.task() {
            Task::KMeans => lloyd_baseline(&ds.rows, h.k(), a.baseline_restarts, a.seed)?,
            Task::GaussianModel => em_baseline(&ds.rows, h.k(), a.baseline_restarts, a.seed, &EmOptions::default())?,
        };
        Some(task_risk(&ds.rows, &b)?)
    } else {
        None
    };
    let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
    let row = format!("{},{},{:e},{},{}", h.task().name(), h.k(), risk, fmt(ari), fmt(baseline));
    match &a.out {
        Some(path) => {
            let mut body = if path.exists() { fs::read_to_string(path)? } else { format!("{EVAL_HEADER}\n") };
            body.push_str(&row);
            body.push('\n');
            write(path, body)?;
            Ok(format!("appended to {}", path.display()))
        }
        None => Ok(format!("{EVAL_HEADER}\n{row}")),
    }
}

pub fn cmd_sweep(a: &SweepArgs) -> CliResult<String> {
    let ds = match &a.data {
        Some(p) => read_dataset(p)?,
        None => gen_synthetic(&SyntheticSpec { k: a.k, d: a.d, n: a.n, separation: a.separation, seed: a.data_seed })?,
    };
    let sizes: Vec<SketchSize> = if !a.m.is_empty() {
        a.m.iter().map(|&m| SketchSize::Absolute(m)).collect()
    } else if !a.m_over_p.is_empty() {
        a.m_over_p.iter().map(|&r| SketchSize::PerParameter(r)).collect()
    } else {
        [0.5, 1.0, 2.0, 4.0].iter().map(|&r| SketchSize::PerParameter(r)).collect()
    };
    let sigma_sq = if a.sigma_sq.is_empty() { vec![a.task.default_sigma_sq()] } else { a.sigma_sq.clone() };
    let mut series = Vec::new();
    for &map in &a.map {
        match map {
            MapKind::Rff => series.push((MapKind::Rff, SamplingKind::Uniform)),
            MapKind::Nystrom => series.extend(a.sampling.iter().map(|&s| (MapKind::Nystrom, s))),
        }
    }
    let cfg = SweepConfig { task: a.task, k: a.k, series, sizes, sigma_sq, lambda: a.lambda, trials: a.trials, seed: a.seed };
    let rows = run_sweep(&ds, &cfg)?;
    let summary = summarize(&rows);
    fs::create_dir_all(&a.out).map_err(|e| CliError::Io(format!("{}: {e}", a.out.display())))?;
    write(&a.out.join("sweep.csv"), rows_csv(&rows))?;
    write(&a.out.join("summary.csv"), summary_csv(&summary))?;
    let label = match a.task {
        TaskKind::Kmeans => "mean squared error",
        TaskKind::Gmm => "negative log-likelihood",
    };
    write(&a.out.join("sweep.svg"), chart(&summary, label))?;
    Ok(summary_csv(&summary))
}

pub fn cmd_theory(a: &TheoryArgs) -> CliResult<String> {
    let ds = read_dataset(&a.data)?;
    let kernel = GaussianKernel::new(a.sigma_sq)?;
    let ambient = AmbientSpace::new(&ds.rows, &kernel, a.seed)?;
    if ambient.subsampled() {
        log::warn!("theory diagnostics use a uniform subsample of {} of {} rows", ambient.n(), ambient.source_rows());
    }
    let radius = ds.rows.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let sampler = SeparatedDiracSampler { k: a.k, d: ds.dim(), epsilon: a.epsilon, radius };
    let mut csv = format!("{},defect_pass_rate\n", TheoryReport::CSV_HEADER);
    let mut text = String::new();
    for &lambda in &a.lambda {
        if !(lambda > 0.0) {
            return Err(CliError::Argument(format!("lambda must be positive, got {lambda}")));
        }
        let cfg = TheoryConfig {
            lambda,
            delta: a.delta,
            z: a.z,
            landmarks: None,
            probe_trials: a.probe_trials,
            sampler,
            source_s: a.source_s,
            seed: a.seed,
        };
        let report = theory_report(&ambient, &cfg)?;
        let rate = if a.trials == 0 {
            f64::NAN
        } else {
            defect_pass_rate(&ambient, report.landmarks, lambda, a.trials, a.seed)?
        };
        csv.push_str(&format!("{},{rate}\n", report.to_csv_row()));
        text.push_str(&report.to_key_value());
        text.push_str(&format!("defect_pass_rate = {rate}\n\n"));
    }
    write(&a.out, csv)?;
    Ok(text)
}
