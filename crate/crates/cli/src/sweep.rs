//! Grid sweeps over map families, sketch sizes and kernel variances.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use clsketch::linalg::{median, std_dev};
use clsketch::tasks::Dataset;
use rayon::prelude::*;

use crate::error::{CliError, CliResult};
use crate::pipeline::{run_job, Job, MapKind, MapSpec, SamplingKind, SketchSize, TaskKind};
use crate::svg::{line_chart, Series};

pub const CSV_HEADER: &str = "family,sampling,m,m_over_p,sigma_sq,trial,risk,ari,wall_time";
pub const SUMMARY_HEADER: &str = "family,sampling,m_over_p,sigma_sq,trials,median_risk,std_risk,median_ari";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub task: TaskKind,
    pub k: usize,
    /// Map families; the sampling scheme is ignored for random Fourier features.
    pub series: Vec<(MapKind, SamplingKind)>,
    pub sizes: Vec<SketchSize>,
    pub sigma_sq: Vec<f64>,
    pub lambda: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub family: MapKind,
    pub sampling: Option<SamplingKind>,
    pub m: usize,
    pub m_over_p: f64,
    pub sigma_sq: f64,
    pub trial: usize,
    /// NaN when the job failed numerically.
    pub risk: f64,
    pub ari: Option<f64>,
    pub wall_time: f64,
}

impl SweepRow {
    pub fn series_name(&self) -> String {
        match self.sampling {
            Some(s) => format!("{}-{}", self.family.name(), s.name()),
            None => self.family.name().to_string(),
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:e},{},{:.6}",
            self.family.name(),
            self.sampling.map_or("none", SamplingKind::name),
            self.m,
            self.m_over_p,
            self.sigma_sq,
            self.trial,
            self.risk,
            self.ari.map_or(String::new(), |a| format!("{a:e}")),
            self.wall_time
        )
    }
}

/// Seed of a trial; shared by every grid point so families see the same draws.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(trial as u64)
}

struct GridPoint {
    family: MapKind,
    sampling: Option<SamplingKind>,
    size: SketchSize,
    sigma_sq: f64,
    trial: usize,
}

/// Runs every grid point × trial on the current rayon pool. Rows come back in
/// grid order regardless of scheduling.
pub fn run_sweep(data: &Dataset, cfg: &SweepConfig) -> CliResult<Vec<SweepRow>> {
    if cfg.series.is_empty() || cfg.sizes.is_empty() || cfg.sigma_sq.is_empty() || cfg.trials == 0 {
        return Err(CliError::Argument("sweep grid is empty".into()));
    }
    let d = data.dim();
    let p = 2 * cfg.k * d;
    let mut series = Vec::new();
    for &(family, sampling) in &cfg.series {
        let s = (family, (family == MapKind::Nystrom).then_some(sampling));
        if !series.contains(&s) {
            series.push(s);
        }
    }
    let mut grid = Vec::new();
    for &(family, sampling) in &series {
        for &size in &cfg.sizes {
            size.resolve(cfg.k, d)?;
            for &sigma_sq in &cfg.sigma_sq {
                for trial in 0..cfg.trials {
                    grid.push(GridPoint { family, sampling, size, sigma_sq, trial });
                }
            }
        }
    }
    grid.par_iter()
        .map(|g| {
            let m = g.size.resolve(cfg.k, d)?;
            let job = Job {
                task: cfg.task,
                k: cfg.k,
                map: MapSpec {
                    map: g.family,
                    sampling: g.sampling.unwrap_or(SamplingKind::Uniform),
                    sigma_sq: g.sigma_sq,
                    m,
                    lambda: cfg.lambda,
                    seed: trial_seed(cfg.seed, g.trial),
                },
            };
            let m_over_p = match g.size {
                SketchSize::PerParameter(r) => r,
                SketchSize::Absolute(m) => m as f64 / p as f64,
            };
            let mut row = SweepRow {
                family: g.family,
                sampling: g.sampling,
                m,
                m_over_p,
                sigma_sq: g.sigma_sq,
                trial: g.trial,
                risk: f64::NAN,
                ari: None,
                wall_time: 0.0,
            };
            match run_job(data, &job) {
                Ok(r) => {
                    row.m = r.m;
                    row.risk = r.risk;
                    row.ari = r.ari;
                    row.wall_time = r.wall_time;
                }
                Err(CliError::Numerical(msg)) => {
                    log::warn!("{} m={m} σ²={} trial {}: {msg}", row.series_name(), g.sigma_sq, g.trial);
                }
                Err(e) => return Err(e),
            }
            Ok(row)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub series: String,
    pub family: MapKind,
    pub sampling: Option<SamplingKind>,
    pub m_over_p: f64,
    pub sigma_sq: f64,
    /// Trials that produced a finite risk.
    pub trials: usize,
    pub median_risk: f64,
    /// Across-trial standard deviation of the risk.
    pub std_risk: f64,
    pub median_ari: Option<f64>,
}

impl SummaryRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:e},{:e},{}",
            self.family.name(),
            self.sampling.map_or("none", SamplingKind::name),
            self.m_over_p,
            self.sigma_sq,
            self.trials,
            self.median_risk,
            self.std_risk,
            self.median_ari.map_or(String::new(), |a| format!("{a:e}"))
        )
    }
}

/// Median and standard deviation per (series, m/p, σ²), in first-appearance order.
pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut order: Vec<(String, u64, u64)> = Vec::new();
    let mut groups: BTreeMap<(String, u64, u64), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.series_name(), r.m_over_p.to_bits(), r.sigma_sq.to_bits());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let risks: Vec<f64> = g.iter().map(|r| r.risk).filter(|v| v.is_finite()).collect();
            let aris: Vec<f64> = g.iter().filter_map(|r| r.ari).collect();
            SummaryRow {
                series: key.0.clone(),
                family: g[0].family,
                sampling: g[0].sampling,
                m_over_p: g[0].m_over_p,
                sigma_sq: g[0].sigma_sq,
                trials: risks.len(),
                median_risk: median(&risks),
                std_risk: std_dev(&risks),
                median_ari: (!aris.is_empty()).then(|| median(&aris)),
            }
        })
        .collect()
}

pub fn rows_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{}", r.to_csv());
    }
    out
}

pub fn summary_csv(summary: &[SummaryRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for s in summary {
        let _ = writeln!(out, "{}", s.to_csv());
    }
    out
}

/// Median risk against m/p, or against σ² (log axis) when only one m/p was swept.
pub fn chart(summary: &[SummaryRow], risk_label: &str) -> String {
    let mut sizes: Vec<u64> = summary.iter().map(|s| s.m_over_p.to_bits()).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let by_size = sizes.len() > 1;
    let mut names: Vec<String> = Vec::new();
    for s in summary {
        if !names.contains(&s.series) {
            names.push(s.series.clone());
        }
    }
    let mut series = Vec::new();
    for name in names {
        let mut points: Vec<(f64, f64, f64)> = summary
            .iter()
            .filter(|s| s.series == name)
            .map(|s| (if by_size { s.m_over_p } else { s.sigma_sq }, s.median_risk, s.std_risk))
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        series.push(Series { name, points });
    }
    if by_size {
        line_chart(&series, "m / p", risk_label, false)
    } else {
        line_chart(&series, "sigma^2", risk_label, true)
    }
}
