//! Learning tasks, datasets and evaluation.

mod baselines;
mod data;
mod metrics;

pub use baselines::{em_baseline, em_run, lloyd_baseline, lloyd_run, EmOptions, EmRun, LloydRun};
pub use data::{
    gen_synthetic, gen_synthetic_with_means, load_csv, load_dataset, parse_csv, save_dataset, Dataset, SyntheticSpec,
};
pub use metrics::{adjusted_rand_index, gmm_nll, hungarian, kmeans_risk, matched_center_error};

use std::fmt::Write as _;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{sq_dist, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    KMeans,
    GaussianModel,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::KMeans => "kmeans",
            Task::GaussianModel => "gmm",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(Task::KMeans),
            "gmm" => Ok(Task::GaussianModel),
            other => Err(Error::Parse(format!("unknown task {other:?}"))),
        }
    }
}

/// A set of k centers, with diagonal variances and weights for Gaussian models.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    task: Task,
    centers: Matrix,
    gammas: Option<Matrix>,
    weights: Option<Vec<f64>>,
}

impl Hypothesis {
    pub fn kmeans(centers: Matrix) -> Self {
        Self { task: Task::KMeans, centers, gammas: None, weights: None }
    }

    pub fn gaussian(centers: Matrix, gammas: Matrix, weights: Vec<f64>) -> Result<Self> {
        let k = centers.rows();
        if k == 0 {
            return Err(Error::InvalidArgument("a hypothesis needs at least one component".into()));
        }
        check_dim(k, gammas.rows())?;
        check_dim(centers.cols(), gammas.cols())?;
        check_dim(k, weights.len())?;
        if let Some(g) = gammas.as_slice().iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidArgument(format!("variance must be positive, got {g}")));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { task: Task::GaussianModel, centers, gammas: Some(gammas), weights: Some(weights) })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn k(&self) -> usize {
        self.centers.rows()
    }

    pub fn dim(&self) -> usize {
        self.centers.cols()
    }

    pub fn centers(&self) -> &Matrix {
        &self.centers
    }

    pub fn gammas(&self) -> Option<&Matrix> {
        self.gammas.as_ref()
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Hard assignment of each row: nearest center, or the component with the
    /// largest posterior for Gaussian models.
    pub fn assign(&self, x: &Matrix) -> Result<Vec<i64>> {
        check_dim(self.dim(), x.cols())?;
        let labels = match (&self.gammas, &self.weights) {
            (Some(g), Some(w)) => x
                .iter_rows()
                .map(|row| {
                    (0..self.k())
                        .map(|i| metrics::log_component(row, self.centers.row(i), g.row(i), w[i]))
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(&b.1))
                        .map_or(0, |(i, _)| i as i64)
                })
                .collect(),
            _ => x
                .iter_rows()
                .map(|row| {
                    self.centers
                        .iter_rows()
                        .map(|c| sq_dist(row, c))
                        .enumerate()
                        .min_by(|a, b| a.1.total_cmp(&b.1))
                        .map_or(0, |(i, _)| i as i64)
                })
                .collect(),
        };
        Ok(labels)
    }

    /// Plain-text table. The first line is `task <name> k <k> d <d>`; each
    /// following line is one component: `μ_1 … μ_d`, prefixed by the weight and
    /// followed by `γ_1 … γ_d` for Gaussian models.
    pub fn to_table(&self) -> String {
        let mut out = format!("task {} k {} d {}\n", self.task.name(), self.k(), self.dim());
        for i in 0..self.k() {
            let mut fields: Vec<String> = Vec::new();
            if let Some(w) = &self.weights {
                fields.push(format!("{:e}", w[i]));
            }
            fields.extend(self.centers.row(i).iter().map(|v| format!("{v:e}")));
            if let Some(g) = &self.gammas {
                fields.extend(g.row(i).iter().map(|v| format!("{v:e}")));
            }
            let _ = writeln!(out, "{}", fields.join(" "));
        }
        out
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines.next().ok_or_else(|| Error::Parse("empty hypothesis".into()))?.split_whitespace().collect();
        let [_, task, _, k, _, d] = header[..] else {
            return Err(Error::Parse("hypothesis header must be `task <name> k <k> d <d>`".into()));
        };
        if header[0] != "task" || header[2] != "k" || header[4] != "d" {
            return Err(Error::Parse("hypothesis header must be `task <name> k <k> d <d>`".into()));
        }
        let task = Task::from_name(task)?;
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
        let (k, d) = (parse_usize(k)?, parse_usize(d)?);
        let width = match task {
            Task::KMeans => d,
            Task::GaussianModel => 1 + 2 * d,
        };
        let mut rows = Vec::with_capacity(k);
        for line in lines {
            let vals = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("{t:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            check_dim(width, vals.len())?;
            rows.push(vals);
        }
        check_dim(k, rows.len())?;
        match task {
            Task::KMeans => Ok(Self::kmeans(Matrix::from_rows(&rows)?)),
            Task::GaussianModel => {
                let centers = Matrix::from_fn(k, d, |i, j| rows[i][1 + j]);
                let gammas = Matrix::from_fn(k, d, |i, j| rows[i][1 + d + j]);
                Self::gaussian(centers, gammas, rows.iter().map(|r| r[0]).collect())
            }
        }
    }
}
