//! One sketch-and-learn job: build a feature map, sketch the data, decode, evaluate.

use std::time::Instant;

use clsketch::decoder::{cl_ompr_with_report, extract_hypothesis, AtomFamily, DecoderOptions};
use clsketch::kernel::DEFAULT_REL_TOL;
use clsketch::landmarks::{sample_als, sample_greedy, sample_uniform};
use clsketch::tasks::{adjusted_rand_index, gmm_nll, kmeans_risk, Dataset, Hypothesis, Task};
use clsketch::{build_nystrom, build_rff, sketch_dataset, FeatureMap, GaussianKernel, Matrix};

use crate::error::{CliError, CliResult};

/// Largest dataset on which leverage scores are computed from the full Gram.
pub const ALS_MAX_ROWS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum MapKind {
    Nystrom,
    Rff,
}

impl MapKind {
    pub fn name(self) -> &'static str {
        match self {
            MapKind::Nystrom => "nystrom",
            MapKind::Rff => "rff",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum SamplingKind {
    Uniform,
    Als,
    Greedy,
}

impl SamplingKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplingKind::Uniform => "uniform",
            SamplingKind::Als => "als",
            SamplingKind::Greedy => "greedy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TaskKind {
    Kmeans,
    Gmm,
}

impl TaskKind {
    pub fn task(self) -> Task {
        match self {
            TaskKind::Kmeans => Task::KMeans,
            TaskKind::Gmm => Task::GaussianModel,
        }
    }

    pub fn family(self) -> AtomFamily {
        match self {
            TaskKind::Kmeans => AtomFamily::Dirac,
            TaskKind::Gmm => AtomFamily::Gaussian,
        }
    }

    /// Kernel variance used for the synthetic benchmarks of each task.
    pub fn default_sigma_sq(self) -> f64 {
        match self {
            TaskKind::Kmeans => 81.0,
            TaskKind::Gmm => 24.0,
        }
    }
}

/// Sketch size, absolute or as a multiple of `p = 2kd`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SketchSize {
    Absolute(usize),
    PerParameter(f64),
}

impl SketchSize {
    pub fn resolve(self, k: usize, d: usize) -> CliResult<usize> {
        let m = match self {
            SketchSize::Absolute(m) => m,
            SketchSize::PerParameter(r) => {
                if !(r > 0.0 && r.is_finite()) {
                    return Err(CliError::Argument(format!("m/p must be positive, got {r}")));
                }
                (r * (2 * k * d) as f64).round() as usize
            }
        };
        if m == 0 {
            return Err(CliError::Argument("sketch size must be at least 1".into()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapSpec {
    pub map: MapKind,
    pub sampling: SamplingKind,
    pub sigma_sq: f64,
    /// Requested sketch size. ALS treats it as the number of draws before deduplication.
    pub m: usize,
    pub lambda: f64,
    pub seed: u64,
}

pub fn build_map(x: &Matrix, spec: &MapSpec) -> CliResult<FeatureMap> {
    if !(spec.sigma_sq > 0.0 && spec.sigma_sq.is_finite()) {
        return Err(CliError::Argument(format!("sigma^2 must be positive, got {}", spec.sigma_sq)));
    }
    match spec.map {
        MapKind::Rff => Ok(build_rff(x.cols(), spec.m.div_ceil(2), spec.sigma_sq, spec.seed)?),
        MapKind::Nystrom => {
            let kernel = GaussianKernel::new(spec.sigma_sq)?;
            let n = x.rows();
            if spec.m > n && spec.sampling != SamplingKind::Als {
                return Err(CliError::Argument(format!("m = {} exceeds n = {n}", spec.m)));
            }
            let set = match spec.sampling {
                SamplingKind::Uniform => sample_uniform(x, spec.m, spec.seed)?,
                SamplingKind::Greedy => sample_greedy(x, &kernel, spec.m, spec.seed)?,
                SamplingKind::Als => {
                    if n > ALS_MAX_ROWS {
                        return Err(CliError::Argument(format!(
                            "leverage-score sampling needs the full {n}×{n} Gram; use at most {ALS_MAX_ROWS} rows"
                        )));
                    }
                    sample_als(x, &kernel.gram_sym(x), spec.m, spec.lambda, spec.seed)?
                }
            };
            Ok(build_nystrom(set, kernel, DEFAULT_REL_TOL)?)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub task: TaskKind,
    pub k: usize,
    pub map: MapSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobResult {
    /// Realized sketch dimension.
    pub m: usize,
    pub risk: f64,
    pub ari: Option<f64>,
    pub residual: f64,
    pub wall_time: f64,
    pub hypothesis: Hypothesis,
}

/// Task risk of a hypothesis: mean squared distance to the nearest center for
/// k-means, mean negative log-likelihood for Gaussian modeling.
pub fn task_risk(x: &Matrix, h: &Hypothesis) -> CliResult<f64> {
    Ok(match h.task() {
        Task::KMeans => kmeans_risk(x, h.centers(), 2)?,
        Task::GaussianModel => gmm_nll(x, h)?,
    })
}

pub fn run_job(data: &Dataset, job: &Job) -> CliResult<JobResult> {
    let start = Instant::now();
    let map = build_map(&data.rows, &job.map)?;
    let sketch = sketch_dataset(&map, &data.rows)?;
    let opts = DecoderOptions::new(job.k).with_seed(job.map.seed);
    let (mixture, report) = cl_ompr_with_report(&sketch, &map, job.task.family(), &opts)?;
    let hypothesis = extract_hypothesis(&mixture, job.task.task())?;
    let wall_time = start.elapsed().as_secs_f64();
    let risk = task_risk(&data.rows, &hypothesis)?;
    let ari = match &data.labels {
        Some(truth) => Some(adjusted_rand_index(&hypothesis.assign(&data.rows)?, truth)?),
        None => None,
    };
    Ok(JobResult { m: map.dim(), risk, ari, residual: report.residual, wall_time, hypothesis })
}
