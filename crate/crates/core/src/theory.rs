//! Spectral diagnostics of the landmark-count requirements, computed on an
//! empirical proxy of the feature space.
//!
//! The ambient space is spanned by the full-dataset Nyström coordinates: with
//! `K_n = V Λ Vᵀ`, point `x_i` has coordinates `F_i = √Λ V_iᵀ`, so `F Fᵀ = K_n`
//! and the empirical covariance `FᵀF / n = Λ / n` is diagonal. Directions with
//! eigenvalues below a relative cutoff are dropped. Every operator quantity
//! here is therefore an empirical proxy of its infinite-dimensional counterpart.

use std::fmt::Write as _;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::kernel::{GaussianKernel, SymMatrix, DEFAULT_REL_TOL};
use crate::linalg::{dot, norm, sq_dist, sym_eigen, top_eigenvalue, Matrix};
use crate::rng::{stream, substream, Purpose, Rng};

/// Largest number of points the ambient eigendecomposition is run on.
pub const AMBIENT_CAP: usize = 2000;

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// `tr((K/n)(K/n + λI)^{-1}) = Σ_l λ_l / (λ_l + λn)` from the eigenvalues of `K`.
pub fn effective_dimension(k: &SymMatrix, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let n = k.order() as f64;
    let eig = sym_eigen(k.order(), k.as_slice())?;
    Ok(eig.values.iter().map(|&l| l / (l + lambda * n)).sum())
}

/// `max(67, 5 N_∞) · ln(4K² / (λδ))`.
pub fn required_m_uniform(lambda: f64, delta: f64, n_infty: f64, kernel_bound: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_delta(delta)?;
    if !(n_infty >= 0.0 && kernel_bound > 0.0) {
        return Err(Error::InvalidArgument("n_infty must be non-negative and K positive".into()));
    }
    Ok(f64::max(67.0, 5.0 * n_infty) * (4.0 * kernel_bound * kernel_bound / (lambda * delta)).ln())
}

/// `max(334, 78 z² N(λ)) · ln(16n / δ)`.
pub fn required_m_als(delta: f64, n: usize, eff_dim: f64, z: f64) -> Result<f64> {
    check_delta(delta)?;
    if n == 0 || !(eff_dim >= 0.0) || !(z > 0.0) {
        return Err(Error::InvalidArgument("n and z must be positive, eff_dim non-negative".into()));
    }
    Ok(f64::max(334.0, 78.0 * z * z * eff_dim) * (16.0 * n as f64 / delta).ln())
}

pub struct AmbientSpace {
    points: Matrix,
    kernel: GaussianKernel,
    /// Retained eigenvalues of `K_n`, descending.
    eigenvalues: Vec<f64>,
    /// n × r, row i holds `F_i`.
    coords: Matrix,
    /// n × r, `V Λ^{-1/2}`: maps a kernel column to coordinates.
    lift: Matrix,
    subsampled: bool,
    source_rows: usize,
}

impl AmbientSpace {
    /// Builds the ambient coordinates of `x`, subsampling uniformly (with `seed`)
    /// to [`AMBIENT_CAP`] rows when larger.
    pub fn new(x: &Matrix, kernel: &GaussianKernel, seed: u64) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::InvalidArgument("empty dataset".into()));
        }
        let subsampled = x.rows() > AMBIENT_CAP;
        let points = if subsampled {
            let mut rng = stream(seed, Purpose::Theory);
            let mut idx = rand::seq::index::sample(&mut rng, x.rows(), AMBIENT_CAP).into_vec();
            idx.sort_unstable();
            x.select_rows(&idx)
        } else {
            x.clone()
        };
        let n = points.rows();
        let gram = kernel.gram_sym(&points);
        let eig = sym_eigen(n, gram.as_slice())?;
        let top = eig.values.last().copied().unwrap_or(0.0).max(0.0);
        let keep: Vec<usize> = (0..n).rev().filter(|&l| eig.values[l] > DEFAULT_REL_TOL * top).collect();
        let eigenvalues: Vec<f64> = keep.iter().map(|&l| eig.values[l]).collect();
        let r = keep.len();
        let coords = Matrix::from_fn(n, r, |i, c| eig.vectors.get(i, keep[c]) * eigenvalues[c].sqrt());
        let lift = Matrix::from_fn(n, r, |i, c| eig.vectors.get(i, keep[c]) / eigenvalues[c].sqrt());
        Ok(Self { points, kernel: *kernel, eigenvalues, coords, lift, subsampled, source_rows: x.rows() })
    }

    pub fn n(&self) -> usize {
        self.points.rows()
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn coords(&self) -> &Matrix {
        &self.coords
    }

    pub fn subsampled(&self) -> bool {
        self.subsampled
    }

    pub fn source_rows(&self) -> usize {
        self.source_rows
    }

    /// Eigenvalues of the empirical covariance, descending.
    pub fn covariance_spectrum(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.eigenvalues.iter().map(|l| l / n).collect()
    }

    pub fn sigma_max(&self) -> f64 {
        self.eigenvalues.first().map_or(0.0, |l| l / self.n() as f64)
    }

    pub fn effective_dimension(&self, lambda: f64) -> Result<f64> {
        check_lambda(lambda)?;
        Ok(self.covariance_spectrum().iter().map(|s| s / (s + lambda)).sum())
    }

    /// Coordinates of an arbitrary point.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.points.cols(), x.len())?;
        let col: Vec<f64> = self.points.iter_rows().map(|p| self.kernel.eval_unchecked(p, x)).collect();
        self.lift.matvec_t(&col)
    }

    /// `Σ_l v_l² / (σ_l + λ)`.
    pub fn resolvent_energy(&self, v: &[f64], lambda: f64) -> f64 {
        let n = self.n() as f64;
        v.iter().zip(&self.eigenvalues).map(|(x, l)| x * x / (l / n + lambda)).sum()
    }

    /// `max_i F_iᵀ (Σ̂ + λI)^{-1} F_i` over the ambient rows.
    pub fn n_infty(&self, lambda: f64) -> Result<f64> {
        check_lambda(lambda)?;
        Ok(self.coords.iter_rows().map(|f| self.resolvent_energy(f, lambda)).fold(0.0, f64::max))
    }

    /// Largest eigenvalue of `(Σ̂ + λI)^{1/2} P^⊥ (Σ̂ + λI)^{1/2}`, where `P`
    /// projects onto the span of the landmark rows. No landmarks give `σ_max + λ`.
    pub fn projection_defect(&self, landmarks: &[usize], lambda: f64) -> Result<f64> {
        check_lambda(lambda)?;
        if let Some(&bad) = landmarks.iter().find(|&&i| i >= self.n()) {
            return Err(Error::InvalidArgument(format!("landmark index {bad} outside 0..{}", self.n())));
        }
        let r = self.rank();
        let basis = self.landmark_basis(landmarks)?;
        let sqrt_d: Vec<f64> = self.covariance_spectrum().iter().map(|s| (s + lambda).sqrt()).collect();
        let mut u = vec![0.0; r];
        let mut coef = vec![0.0; basis.len()];
        let value = top_eigenvalue(
            r,
            |v, out| {
                for ((ui, vi), di) in u.iter_mut().zip(v).zip(&sqrt_d) {
                    *ui = vi * di;
                }
                for (c, q) in coef.iter_mut().zip(&basis) {
                    *c = dot(q, &u);
                }
                for (c, q) in coef.iter().zip(&basis) {
                    for (ui, qi) in u.iter_mut().zip(q) {
                        *ui -= c * qi;
                    }
                }
                for ((o, ui), di) in out.iter_mut().zip(&u).zip(&sqrt_d) {
                    *o = ui * di;
                }
            },
            1e-12,
        );
        Ok(value.max(0.0))
    }

    /// Orthonormal basis (vectors of length r) of the span of the landmark rows.
    fn landmark_basis(&self, landmarks: &[usize]) -> Result<Vec<Vec<f64>>> {
        let r = self.rank();
        if landmarks.is_empty() || r == 0 {
            return Ok(Vec::new());
        }
        let mut gram = vec![0.0; r * r];
        for &i in landmarks {
            let f = self.coords.row(i);
            for a in 0..r {
                if f[a] == 0.0 {
                    continue;
                }
                let row = &mut gram[a * r..(a + 1) * r];
                for (g, fb) in row.iter_mut().zip(f) {
                    *g += f[a] * fb;
                }
            }
        }
        let eig = sym_eigen(r, &gram)?;
        let top = eig.values.last().copied().unwrap_or(0.0);
        Ok((0..r)
            .filter(|&l| eig.values[l] > DEFAULT_REL_TOL * top)
            .map(|l| (0..r).map(|a| eig.vectors.get(a, l)).collect())
            .collect())
    }

    /// Mean embedding of a weighted set of Diracs.
    pub fn embed_mixture(&self, m: &DiracMixture) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.rank()];
        for (c, &w) in m.centers.iter_rows().zip(&m.weights) {
            for (o, v) in out.iter_mut().zip(self.embed(c)?) {
                *o += w * v;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiracMixture {
    pub centers: Matrix,
    pub weights: Vec<f64>,
}

/// Source of mixture pairs whose normalized secants are probed.
pub trait MixturePairSampler {
    fn sample_pair(&self, rng: &mut Rng) -> Result<(DiracMixture, DiracMixture)>;
}

/// Two independent k-Dirac mixtures with centers uniform in the ball of
/// radius `radius`, pairwise at least `2 epsilon` apart, and weights uniform
/// on the simplex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparatedDiracSampler {
    pub k: usize,
    pub d: usize,
    pub epsilon: f64,
    pub radius: f64,
}

const MAX_REJECTIONS: usize = 10_000;

impl SeparatedDiracSampler {
    fn sample_mixture(&self, rng: &mut Rng) -> Result<DiracMixture> {
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(self.k);
        let min_sq = (2.0 * self.epsilon).powi(2);
        let mut attempts = 0;
        while centers.len() < self.k {
            attempts += 1;
            if attempts > MAX_REJECTIONS * self.k {
                return Err(Error::InvalidArgument("separation cannot be met inside the radius".into()));
            }
            let mut c: Vec<f64> = (0..self.d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let len = norm(&c);
            if len == 0.0 {
                continue;
            }
            let scale = self.radius * rng.gen::<f64>().powf(1.0 / self.d as f64) / len;
            c.iter_mut().for_each(|v| *v *= scale);
            if centers.iter().all(|o| sq_dist(o, &c) >= min_sq) {
                centers.push(c);
            }
        }
        let raw: Vec<f64> = (0..self.k).map(|_| -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
        let total: f64 = raw.iter().sum();
        Ok(DiracMixture { centers: Matrix::from_rows(&centers)?, weights: raw.iter().map(|w| w / total).collect() })
    }
}

impl MixturePairSampler for SeparatedDiracSampler {
    fn sample_pair(&self, rng: &mut Rng) -> Result<(DiracMixture, DiracMixture)> {
        if self.k == 0 || self.d == 0 || !(self.epsilon >= 0.0) || !(self.radius > 0.0) {
            return Err(Error::InvalidArgument("sampler needs k, d, radius positive and epsilon non-negative".into()));
        }
        Ok((self.sample_mixture(rng)?, self.sample_mixture(rng)?))
    }
}

/// Unit secant directions `(A(p) − A(q)) / ‖A(p) − A(q)‖`, one slot per trial;
/// `None` marks a pair whose embeddings coincide.
pub fn secant_directions(
    ambient: &AmbientSpace,
    sampler: &dyn MixturePairSampler,
    trials: usize,
    seed: u64,
) -> Result<Vec<Option<Vec<f64>>>> {
    (0..trials)
        .map(|t| {
            let mut rng = substream(seed, Purpose::Probe, t as u64);
            let (p, q) = sampler.sample_pair(&mut rng)?;
            let mut diff = ambient.embed_mixture(&p)?;
            for (a, b) in diff.iter_mut().zip(ambient.embed_mixture(&q)?) {
                *a -= b;
            }
            let len = norm(&diff);
            if len < 1e-10 {
                return Ok(None);
            }
            diff.iter_mut().for_each(|v| *v /= len);
            Ok(Some(diff))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    /// Largest `μ̂ᵀ(Σ̂ + λI)^{-1}μ̂` over probed directions.
    pub sup: f64,
    /// Per-trial values, `None` for skipped pairs.
    pub values: Vec<Option<f64>>,
    /// Largest `Σ_l ⟨μ̂, e_l⟩² / σ_l^{2s}` when a source exponent was given.
    pub source_sum: Option<f64>,
}

pub fn probe_directions(
    ambient: &AmbientSpace,
    directions: &[Option<Vec<f64>>],
    lambda: f64,
    source_s: Option<f64>,
) -> Result<ProbeResult> {
    check_lambda(lambda)?;
    if let Some(s) = source_s {
        if !(s > 0.0 && s < 0.5) {
            return Err(Error::InvalidArgument(format!("source exponent must lie in (0, 1/2), got {s}")));
        }
    }
    if directions.iter().all(Option::is_none) {
        return Err(Error::InvalidArgument("every sampled pair was degenerate".into()));
    }
    let values: Vec<Option<f64>> =
        directions.iter().map(|d| d.as_ref().map(|v| ambient.resolvent_energy(v, lambda))).collect();
    let sup = values.iter().flatten().copied().fold(0.0, f64::max);
    let source_sum = source_s.map(|s| {
        let spectrum = ambient.covariance_spectrum();
        directions
            .iter()
            .flatten()
            .map(|v| v.iter().zip(&spectrum).map(|(x, sig)| x * x / sig.powf(2.0 * s)).sum::<f64>())
            .fold(0.0, f64::max)
    });
    Ok(ProbeResult { sup, values, source_sum })
}

/// Monte-Carlo estimate of `sup N_{A(μ)}(λ)` over normalized secants drawn from `sampler`.
pub fn secant_probe(
    ambient: &AmbientSpace,
    sampler: &dyn MixturePairSampler,
    lambda: f64,
    trials: usize,
    seed: u64,
    source_s: Option<f64>,
) -> Result<ProbeResult> {
    check_lambda(lambda)?;
    let dirs = secant_directions(ambient, sampler, trials, seed)?;
    probe_directions(ambient, &dirs, lambda, source_s)
}

/// Fraction of `trials` uniform draws of `m` landmarks whose projection defect is at most `3λ`.
pub fn defect_pass_rate(ambient: &AmbientSpace, m: usize, lambda: f64, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 || m > ambient.n() {
        return Err(Error::InvalidArgument(format!("need trials > 0 and m <= {}, got {trials} and {m}", ambient.n())));
    }
    let mut passed = 0usize;
    for t in 0..trials {
        let mut rng = substream(seed, Purpose::Landmarks, t as u64);
        let idx = rand::seq::index::sample(&mut rng, ambient.n(), m).into_vec();
        if ambient.projection_defect(&idx, lambda)? <= 3.0 * lambda {
            passed += 1;
        }
    }
    Ok(passed as f64 / trials as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryConfig {
    pub lambda: f64,
    pub delta: f64,
    /// Leverage-score approximation factor in the ALS bound.
    pub z: f64,
    /// Landmarks for the projection defect; `None` uses the uniform requirement capped at n.
    pub landmarks: Option<usize>,
    pub probe_trials: usize,
    pub sampler: SeparatedDiracSampler,
    pub source_s: Option<f64>,
    pub seed: u64,
}

/// All diagnostics for one λ. Values are empirical proxies.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryReport {
    pub lambda: f64,
    pub n: usize,
    pub subsampled: bool,
    pub eff_dim: f64,
    pub n_infty: f64,
    pub landmarks: usize,
    pub projection_defect: f64,
    pub bound_3lambda_ok: bool,
    pub required_m_uniform: f64,
    pub required_m_als: f64,
    pub secant_sup_estimate: f64,
    pub source_condition_sum: Option<f64>,
}

pub fn theory_report(ambient: &AmbientSpace, cfg: &TheoryConfig) -> Result<TheoryReport> {
    let lambda = cfg.lambda;
    let n = ambient.n();
    let eff_dim = ambient.effective_dimension(lambda)?;
    let n_infty = ambient.n_infty(lambda)?;
    let required_m_uniform = required_m_uniform(lambda, cfg.delta, n_infty, 1.0)?;
    let required_m_als = required_m_als(cfg.delta, n, eff_dim, cfg.z)?;
    let m = cfg.landmarks.unwrap_or_else(|| (required_m_uniform.ceil() as usize).min(n)).min(n);
    let mut rng = stream(cfg.seed, Purpose::Landmarks);
    let idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
    let projection_defect = ambient.projection_defect(&idx, lambda)?;
    let probe = if cfg.probe_trials > 0 {
        Some(secant_probe(ambient, &cfg.sampler, lambda, cfg.probe_trials, cfg.seed, cfg.source_s)?)
    } else {
        None
    };
    Ok(TheoryReport {
        lambda,
        n,
        subsampled: ambient.subsampled(),
        eff_dim,
        n_infty,
        landmarks: m,
        projection_defect,
        bound_3lambda_ok: projection_defect <= 3.0 * lambda,
        required_m_uniform,
        required_m_als,
        secant_sup_estimate: probe.as_ref().map_or(f64::NAN, |p| p.sup),
        source_condition_sum: probe.and_then(|p| p.source_sum),
    })
}

impl TheoryReport {
    pub const CSV_HEADER: &'static str = "lambda,n,subsampled,eff_dim,n_infty,landmarks,projection_defect,bound_3lambda_ok,required_m_uniform,required_m_als,secant_sup_estimate,source_condition_sum";

    fn fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("lambda", format!("{:e}", self.lambda)),
            ("n", self.n.to_string()),
            ("subsampled", self.subsampled.to_string()),
            ("eff_dim", format!("{:e}", self.eff_dim)),
            ("n_infty", format!("{:e}", self.n_infty)),
            ("landmarks", self.landmarks.to_string()),
            ("projection_defect", format!("{:e}", self.projection_defect)),
            ("bound_3lambda_ok", self.bound_3lambda_ok.to_string()),
            ("required_m_uniform", format!("{:e}", self.required_m_uniform)),
            ("required_m_als", format!("{:e}", self.required_m_als)),
            ("secant_sup_estimate", format!("{:e}", self.secant_sup_estimate)),
            ("source_condition_sum", self.source_condition_sum.map_or(String::new(), |v| format!("{v:e}"))),
        ]
    }

    /// `key = value` lines, preceded by a note that the values are empirical proxies.
    pub fn to_key_value(&self) -> String {
        let mut out = String::from("# empirical proxy: operators on the span of the observed features\n");
        for (k, v) in self.fields() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn to_csv_row(&self) -> String {
        self.fields().into_iter().map(|(_, v)| v).collect::<Vec<_>>().join(",")
    }
}
