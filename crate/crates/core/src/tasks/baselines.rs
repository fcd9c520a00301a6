//! Reference solvers: Lloyd's k-means and diagonal-covariance EM, both seeded
//! with k-means++ and run from several restarts.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;

use super::metrics::{log_component, log_sum_exp};
use super::Hypothesis;
use crate::error::{Error, Result};
use crate::linalg::{sq_dist, Matrix};
use crate::rng::{substream, Purpose, Rng};

const LLOYD_MAX_ITER: usize = 300;

fn check_k(x: &Matrix, k: usize) -> Result<()> {
    if k == 0 || k > x.rows() {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..={}", x.rows())));
    }
    Ok(())
}

/// k-means++ seeding: first center uniform, then proportional to squared distance.
fn kmeans_pp(x: &Matrix, k: usize, rng: &mut Rng) -> Matrix {
    let n = x.rows();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut dist: Vec<f64> = x.iter_rows().map(|r| sq_dist(r, x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let next = match WeightedIndex::new(&dist) {
            Ok(w) => w.sample(rng),
            // all remaining mass is zero: duplicates only, take the first unused row
            Err(_) => (0..n).find(|i| !chosen.contains(i)).expect("k ≤ n"),
        };
        chosen.push(next);
        for (d, r) in dist.iter_mut().zip(x.iter_rows()) {
            *d = d.min(sq_dist(r, x.row(next)));
        }
    }
    x.select_rows(&chosen)
}

#[derive(Debug, Clone)]
pub struct LloydRun {
    pub centers: Matrix,
    pub labels: Vec<usize>,
    /// Sum of squared distances after each assignment step.
    pub sse_trace: Vec<f64>,
}

impl LloydRun {
    pub fn sse(&self) -> f64 {
        *self.sse_trace.last().expect("at least one assignment")
    }
}

fn assign(x: &Matrix, centers: &Matrix, labels: &mut [usize]) -> (f64, bool) {
    let mut sse = 0.0;
    let mut changed = false;
    for (i, row) in x.iter_rows().enumerate() {
        let (best, d) = centers
            .iter_rows()
            .map(|c| sq_dist(row, c))
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (j, d)| if d < acc.1 { (j, d) } else { acc });
        if labels[i] != best {
            labels[i] = best;
            changed = true;
        }
        sse += d;
    }
    (sse, changed)
}

/// Lloyd iterations from `init` until the assignment stops changing. An empty
/// cluster keeps its previous center.
pub fn lloyd_run(x: &Matrix, init: Matrix) -> LloydRun {
    let (k, d) = (init.rows(), init.cols());
    let mut centers = init;
    let mut labels = vec![usize::MAX; x.rows()];
    let mut sse_trace = Vec::new();
    for _ in 0..LLOYD_MAX_ITER {
        let (sse, changed) = assign(x, &centers, &mut labels);
        sse_trace.push(sse);
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (row, &l) in x.iter_rows().zip(&labels) {
            counts[l] += 1;
            sums.row_mut(l).iter_mut().zip(row).for_each(|(s, v)| *s += v);
        }
        for (j, &c) in counts.iter().enumerate() {
            if c > 0 {
                let inv = 1.0 / c as f64;
                centers.row_mut(j).iter_mut().zip(sums.row(j)).for_each(|(m, s)| *m = s * inv);
            }
        }
    }
    LloydRun { centers, labels, sse_trace }
}

/// Best of `restarts` k-means++ / Lloyd runs by final sum of squared distances.
pub fn lloyd_baseline(x: &Matrix, k: usize, restarts: usize, seed: u64) -> Result<Hypothesis> {
    check_k(x, k)?;
    let best = (0..restarts.max(1))
        .map(|r| {
            let mut rng = substream(seed, Purpose::Baseline, r as u64);
            lloyd_run(x, kmeans_pp(x, k, &mut rng))
        })
        .min_by(|a, b| a.sse().total_cmp(&b.sse()))
        .expect("at least one restart");
    Ok(Hypothesis::kmeans(best.centers))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Stops when the mean NLL improves by less than this.
    pub tol: f64,
    /// Lower bound on every variance; `None` uses 1e-6 times the mean per-coordinate data variance.
    pub gamma_floor: Option<f64>,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { max_iter: 500, tol: 1e-10, gamma_floor: None }
    }
}

#[derive(Debug, Clone)]
pub struct EmRun {
    pub hypothesis: Hypothesis,
    /// Mean NLL of the starting model followed by one entry per EM step.
    pub nll_trace: Vec<f64>,
}

fn default_floor(x: &Matrix) -> f64 {
    let (n, d) = (x.rows() as f64, x.cols());
    let mean_var = (0..d)
        .map(|j| {
            let m = x.iter_rows().map(|r| r[j]).sum::<f64>() / n;
            x.iter_rows().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n
        })
        .sum::<f64>()
        / d as f64;
    (1e-6 * mean_var).max(1e-12)
}

/// Responsibilities (row-major n×k) and the mean NLL of the current model.
fn e_step(x: &Matrix, mu: &Matrix, gamma: &Matrix, w: &[f64], resp: &mut [f64]) -> f64 {
    let k = w.len();
    let mut nll = 0.0;
    for (i, row) in x.iter_rows().enumerate() {
        let r = &mut resp[i * k..(i + 1) * k];
        for (j, rj) in r.iter_mut().enumerate() {
            *rj = log_component(row, mu.row(j), gamma.row(j), w[j]);
        }
        let lse = log_sum_exp(r);
        nll -= lse;
        r.iter_mut().for_each(|v| *v = (*v - lse).exp());
    }
    nll / x.rows() as f64
}

fn m_step(x: &Matrix, resp: &[f64], floor: f64, mu: &mut Matrix, gamma: &mut Matrix, w: &mut [f64]) {
    let (n, d, k) = (x.rows(), x.cols(), w.len());
    for j in 0..k {
        let nj: f64 = (0..n).map(|i| resp[i * k + j]).sum();
        w[j] = nj / n as f64;
        if nj <= 1e-300 {
            // a dead component keeps its parameters and weight zero
            continue;
        }
        for c in 0..d {
            let m = (0..n).map(|i| resp[i * k + j] * x.get(i, c)).sum::<f64>() / nj;
            let v = (0..n).map(|i| resp[i * k + j] * (x.get(i, c) - m).powi(2)).sum::<f64>() / nj;
            mu.set(j, c, m);
            gamma.set(j, c, v.max(floor));
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
}

/// EM for a diagonal Gaussian mixture starting from `init`.
pub fn em_run(x: &Matrix, init: &Hypothesis, opts: &EmOptions) -> Result<EmRun> {
    let (Some(g0), Some(w0)) = (init.gammas(), init.weights()) else {
        return Err(Error::InvalidArgument("EM needs a Gaussian starting model".into()));
    };
    crate::error::check_dim(init.dim(), x.cols())?;
    let floor = opts.gamma_floor.unwrap_or_else(|| default_floor(x));
    let k = init.k();
    let mut mu = init.centers().clone();
    let mut gamma = g0.clone();
    let mut w = w0.to_vec();
    let mut resp = vec![0.0; x.rows() * k];
    let mut trace = vec![e_step(x, &mu, &gamma, &w, &mut resp)];
    for _ in 0..opts.max_iter {
        m_step(x, &resp, floor, &mut mu, &mut gamma, &mut w);
        let nll = e_step(x, &mu, &gamma, &w, &mut resp);
        let prev = *trace.last().expect("non-empty");
        trace.push(nll);
        if prev - nll < opts.tol {
            break;
        }
    }
    // weights were renormalized, so they sum to one up to rounding
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(EmRun { hypothesis: Hypothesis::gaussian(mu, gamma, w)?, nll_trace: trace })
}

/// Best of `restarts` EM runs by final NLL, each initialized with k-means++
/// centers, the data variance and uniform weights.
pub fn em_baseline(x: &Matrix, k: usize, restarts: usize, seed: u64, opts: &EmOptions) -> Result<Hypothesis> {
    check_k(x, k)?;
    let n = x.rows() as f64;
    let d = x.cols();
    let floor = opts.gamma_floor.unwrap_or_else(|| default_floor(x));
    let var: Vec<f64> = (0..d)
        .map(|j| {
            let m = x.iter_rows().map(|r| r[j]).sum::<f64>() / n;
            (x.iter_rows().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n).max(floor)
        })
        .collect();
    let opts = EmOptions { gamma_floor: Some(floor), ..*opts };
    let mut best: Option<EmRun> = None;
    for r in 0..restarts.max(1) {
        let mut rng = substream(seed, Purpose::Baseline, r as u64);
        let centers = kmeans_pp(x, k, &mut rng);
        let gammas = Matrix::from_fn(k, d, |_, j| var[j]);
        let init = Hypothesis::gaussian(centers, gammas, vec![1.0 / k as f64; k])?;
        let run = em_run(x, &init, &opts)?;
        let better = best.as_ref().map_or(true, |b| run.nll_trace.last() < b.nll_trace.last());
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart").hypothesis)
}
