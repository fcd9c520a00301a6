//! Landmark selection: uniform subsets, exact leverage-score sampling and greedy
//! Schur-complement (pivoted Cholesky) selection.

use faer::{Mat, Side};
use faer::solvers::SpSolver;
use rand::distributions::{Distribution, WeightedIndex};

use crate::error::{check_dim, Error, Result};
use crate::kernel::{GaussianKernel, SymMatrix};
use crate::linalg::Matrix;
use crate::rng::{stream, Purpose};

/// Residual Schur complement below which greedy selection stops.
pub const GREEDY_RESIDUAL_FLOOR: f64 = 1e-12;
const GREEDY_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMethod {
    Uniform,
    Als,
    Greedy,
}

impl SamplingMethod {
    pub fn tag(self) -> u8 {
        match self {
            SamplingMethod::Uniform => 0,
            SamplingMethod::Als => 1,
            SamplingMethod::Greedy => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(SamplingMethod::Uniform),
            1 => Some(SamplingMethod::Als),
            2 => Some(SamplingMethod::Greedy),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SamplingMethod::Uniform => "uniform",
            SamplingMethod::Als => "als",
            SamplingMethod::Greedy => "greedy",
        }
    }
}

/// Landmark points drawn from a dataset together with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    pub points: Matrix,
    pub source_indices: Vec<usize>,
    pub method: SamplingMethod,
    pub seed: u64,
    pub als_lambda: Option<f64>,
    /// Set by greedy selection when every remaining point had a vanishing
    /// Schur complement before `m` landmarks were found.
    pub rank_exhausted: bool,
}

impl LandmarkSet {
    pub fn len(&self) -> usize {
        self.source_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_indices.is_empty()
    }

    fn from_indices(x: &Matrix, indices: Vec<usize>, method: SamplingMethod, seed: u64) -> Self {
        Self {
            points: x.select_rows(&indices),
            source_indices: indices,
            method,
            seed,
            als_lambda: None,
            rank_exhausted: false,
        }
    }
}

/// `m` distinct indices drawn uniformly without replacement.
pub fn sample_uniform(x: &Matrix, m: usize, seed: u64) -> Result<LandmarkSet> {
    let n = x.rows();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!("uniform sampling needs 1 <= m <= n, got m={m}, n={n}")));
    }
    let mut rng = stream(seed, Purpose::Landmarks);
    let indices = rand::seq::index::sample(&mut rng, n, m).into_vec();
    Ok(LandmarkSet::from_indices(x, indices, SamplingMethod::Uniform, seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeverageScores {
    pub lambda: f64,
    pub scores: Vec<f64>,
}

impl LeverageScores {
    pub fn sum(&self) -> f64 {
        self.scores.iter().sum()
    }
}

/// `ℓ(λ, i) = (K (K + λ n I)^{-1})_{ii}`, from a Cholesky solve of `(K + λnI) X = K`.
pub fn leverage_scores(k: &SymMatrix, lambda: f64) -> Result<LeverageScores> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    let n = k.order();
    let shift = lambda * n as f64;
    let a = Mat::from_fn(n, n, |i, j| k.get(i, j) + if i == j { shift } else { 0.0 });
    let rhs = Mat::from_fn(n, n, |i, j| k.get(i, j));
    let chol = a
        .cholesky(Side::Lower)
        .map_err(|_| Error::Numerical("K + λnI is not positive definite".into()))?;
    let sol = chol.solve(&rhs);
    let scores = (0..n).map(|i| sol.read(i, i)).collect();
    Ok(LeverageScores { lambda, scores })
}

/// Draws `m` indices i.i.d. with probability proportional to the leverage
/// scores, then drops duplicates (first occurrence order is kept).
pub fn sample_als(x: &Matrix, k: &SymMatrix, m: usize, lambda: f64, seed: u64) -> Result<LandmarkSet> {
    check_dim(x.rows(), k.order())?;
    let scores = leverage_scores(k, lambda)?;
    sample_from_scores(x, &scores, m, seed)
}

/// ALS sampling from precomputed scores (scores only depend on the data and λ).
pub fn sample_from_scores(x: &Matrix, scores: &LeverageScores, m: usize, seed: u64) -> Result<LandmarkSet> {
    check_dim(x.rows(), scores.scores.len())?;
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    let weights: Vec<f64> = scores.scores.iter().map(|&s| s.max(0.0)).collect();
    let dist = WeightedIndex::new(&weights)
        .map_err(|_| Error::Numerical("all leverage scores are zero".into()))?;
    let mut rng = stream(seed, Purpose::Landmarks);
    let mut seen = vec![false; x.rows()];
    let mut indices = Vec::with_capacity(m);
    for _ in 0..m {
        let i = dist.sample(&mut rng);
        if !seen[i] {
            seen[i] = true;
            indices.push(i);
        }
    }
    let mut set = LandmarkSet::from_indices(x, indices, SamplingMethod::Als, seed);
    set.als_lambda = Some(scores.lambda);
    Ok(set)
}

/// Greedy diversity selection by maximal Schur complement.
///
/// Maintains a pivoted partial Cholesky factor, so every step costs `O(n t)`.
/// Ties (scores within 1e-12) go to the lowest dataset index. `seed` is recorded but unused.
pub fn sample_greedy(x: &Matrix, kernel: &GaussianKernel, m: usize, seed: u64) -> Result<LandmarkSet> {
    let n = x.rows();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!("greedy sampling needs 1 <= m <= n, got m={m}, n={n}")));
    }
    // residual[i] = κ(x_i, x_i) − ‖G_i‖², with G the partial Cholesky factor (n × t)
    let mut residual: Vec<f64> = x.iter_rows().map(|r| kernel.eval_unchecked(r, r)).collect();
    let mut selected = vec![false; n];
    let mut factor: Vec<Vec<f64>> = Vec::with_capacity(m); // column t of G
    let mut indices = Vec::with_capacity(m);
    let mut exhausted = false;
    for _ in 0..m {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if selected[i] {
                continue;
            }
            // residuals within rounding of each other count as tied
            if best.map_or(true, |(_, b)| residual[i] > b + GREEDY_TIE_TOL) {
                best = Some((i, residual[i]));
            }
        }
        let Some((pivot, pivot_res)) = best else { break };
        if pivot_res < GREEDY_RESIDUAL_FLOOR {
            exhausted = true;
            break;
        }
        selected[pivot] = true;
        indices.push(pivot);
        let scale = pivot_res.sqrt();
        let xp = x.row(pivot);
        let mut col = vec![0.0; n];
        for i in 0..n {
            if selected[i] && i != pivot {
                continue;
            }
            let mut v = kernel.eval_unchecked(x.row(i), xp);
            for g in &factor {
                v -= g[i] * g[pivot];
            }
            col[i] = v / scale;
        }
        for i in 0..n {
            if !selected[i] {
                residual[i] -= col[i] * col[i];
            }
        }
        residual[pivot] = 0.0;
        factor.push(col);
    }
    if exhausted {
        log::warn!("greedy landmark selection exhausted the kernel rank after {} of {m} landmarks", indices.len());
    }
    let mut set = LandmarkSet::from_indices(x, indices, SamplingMethod::Greedy, seed);
    set.rank_exhausted = exhausted;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{solve_small, sym_eigen};
    use crate::rng::{stream, Purpose};
    use rand::Rng as _;

    fn random_points(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = stream(seed, Purpose::Theory);
        Matrix::from_fn(n, d, |_, _| rng.gen_range(-3.0..3.0))
    }

    #[test]
    fn uniform_full_draw_is_a_permutation() {
        let x = random_points(12, 2, 1);
        let set = sample_uniform(&x, 12, 3).unwrap();
        let mut idx = set.source_indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, (0..12).collect::<Vec<_>>());
        for (r, &i) in set.source_indices.iter().enumerate() {
            assert_eq!(set.points.row(r), x.row(i));
        }
        assert!(sample_uniform(&x, 13, 3).is_err());
        assert!(sample_uniform(&x, 0, 3).is_err());
    }

    #[test]
    fn uniform_is_deterministic() {
        let x = Matrix::zeros(10_000, 1);
        let a = sample_uniform(&x, 100, 7).unwrap();
        let b = sample_uniform(&x, 100, 7).unwrap();
        assert_eq!(a.source_indices, b.source_indices);
    }

    /// Each index of a 3-of-10 subset has marginal inclusion probability 0.3.
    #[test]
    fn uniform_marginals() {
        let x = Matrix::zeros(10, 1);
        let reps = 10_000;
        let mut counts = [0usize; 10];
        for seed in 0..reps {
            for i in sample_uniform(&x, 3, seed).unwrap().source_indices {
                counts[i] += 1;
            }
        }
        for c in counts {
            let f = c as f64 / reps as f64;
            assert!((f - 0.3).abs() <= 0.02, "frequency {f}");
        }
    }

    #[test]
    fn leverage_scores_identity() {
        let n = 7;
        let lambda = 0.3;
        let s = leverage_scores(&SymMatrix::identity(n), lambda).unwrap();
        for v in s.scores {
            assert!((v - 1.0 / (1.0 + lambda * n as f64)).abs() < 1e-15);
        }
        assert!(leverage_scores(&SymMatrix::identity(2), 0.0).is_err());
        assert!(leverage_scores(&SymMatrix::identity(2), -1.0).is_err());
    }

    /// All-ones K = n u uᵀ with unit u: the only nonzero eigenvalue is n, so
    /// ℓ_i = u_i² · n / (n + λn) = (1/n) · 1/(1+λ).
    #[test]
    fn leverage_scores_rank_one() {
        let n = 4;
        let lambda = 0.25;
        let k = SymMatrix::new(n, vec![1.0; n * n]).unwrap();
        let s = leverage_scores(&k, lambda).unwrap();
        let expected = (1.0 / n as f64) * (n as f64 / (n as f64 + lambda * n as f64));
        for v in s.scores {
            assert!((v - expected).abs() < 1e-14, "{v} vs {expected}");
        }
    }

    #[test]
    fn leverage_scores_in_unit_interval_and_monotone_in_lambda() {
        let x = random_points(50, 3, 9);
        let k = GaussianKernel::new(2.0).unwrap().gram_sym(&x);
        let lo = leverage_scores(&k, 1e-3).unwrap();
        let hi = leverage_scores(&k, 1e-1).unwrap();
        for (a, b) in lo.scores.iter().zip(&hi.scores) {
            assert!(*a > 0.0 && *a < 1.0);
            assert!(*b <= *a);
        }
        // trace identity against an eigendecomposition
        let eig = sym_eigen(50, k.as_slice()).unwrap();
        let trace: f64 = eig.values.iter().map(|&l| l.max(0.0) / (l.max(0.0) + 1e-3 * 50.0)).sum();
        assert!((lo.sum() - trace).abs() <= 1e-10 * trace);
    }

    #[test]
    fn als_uniform_scores_sample_uniformly() {
        let n = 20;
        let x = Matrix::from_fn(n, 1, |i, _| i as f64);
        let k = SymMatrix::identity(n);
        let scores = leverage_scores(&k, 0.1).unwrap();
        let mut counts = vec![0usize; n];
        let draws = 10_000;
        // one draw per seed keeps duplicates out of the count
        for seed in 0..draws {
            let set = sample_from_scores(&x, &scores, 1, seed).unwrap();
            counts[set.source_indices[0]] += 1;
        }
        let p = 1.0 / n as f64;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() <= 3.5 * sd, "count {c}");
        }
    }

    #[test]
    fn als_degenerate_distribution() {
        let x = Matrix::from_fn(5, 1, |i, _| i as f64);
        let scores = LeverageScores { lambda: 1.0, scores: vec![0.0, 0.0, 1.0 - 1e-9, 0.0, 0.0] };
        let set = sample_from_scores(&x, &scores, 10, 4).unwrap();
        assert_eq!(set.source_indices, vec![2]);
        assert_eq!(set.als_lambda, Some(1.0));
        let zero = LeverageScores { lambda: 1.0, scores: vec![0.0; 5] };
        assert!(sample_from_scores(&x, &zero, 3, 4).is_err());
    }

    #[test]
    fn als_is_deterministic_and_deduplicated() {
        let x = random_points(100, 2, 2);
        let k = GaussianKernel::new(1.0).unwrap().gram_sym(&x);
        let a = sample_als(&x, &k, 30, 1e-2, 5).unwrap();
        let b = sample_als(&x, &k, 30, 1e-2, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.len() <= 30);
        let mut idx = a.source_indices.clone();
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), a.len());
        assert_eq!(a.method, SamplingMethod::Als);
    }

    #[test]
    fn greedy_first_pick_is_lowest_index() {
        let x = random_points(15, 2, 3);
        let set = sample_greedy(&x, &GaussianKernel::new(1.0).unwrap(), 4, 0).unwrap();
        assert_eq!(set.source_indices[0], 0);
    }

    #[test]
    fn greedy_skips_duplicates() {
        let mut rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 1.5, 0.0]).collect();
        rows.push(rows[0].clone());
        let x = Matrix::from_rows(&rows).unwrap();
        let kernel = GaussianKernel::new(1.0).unwrap();
        let set = sample_greedy(&x, &kernel, 6, 0).unwrap();
        assert!(!set.source_indices.contains(&6));
        let all = sample_greedy(&x, &kernel, 7, 0).unwrap();
        assert!(all.rank_exhausted);
        assert_eq!(all.len(), 6);
    }

    /// Oracle: recompute every Schur complement from scratch with a dense solve.
    fn greedy_oracle(x: &Matrix, kernel: &GaussianKernel, m: usize) -> Vec<usize> {
        let n = x.rows();
        let mut chosen: Vec<usize> = Vec::new();
        for _ in 0..m {
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            for i in 0..n {
                if chosen.contains(&i) {
                    continue;
                }
                let kii = kernel.eval(x.row(i), x.row(i)).unwrap();
                let score = if chosen.is_empty() {
                    kii
                } else {
                    let t = chosen.len();
                    let kt = Matrix::from_fn(t, t, |a, b| kernel.eval(x.row(chosen[a]), x.row(chosen[b])).unwrap());
                    let phi: Vec<f64> = chosen.iter().map(|&c| kernel.eval(x.row(i), x.row(c)).unwrap()).collect();
                    let sol = solve_small(&kt, &phi).unwrap();
                    kii - phi.iter().zip(&sol).map(|(a, b)| a * b).sum::<f64>()
                };
                if score > best.1 + 1e-12 {
                    best = (i, score);
                }
            }
            chosen.push(best.0);
        }
        chosen
    }

    #[test]
    fn greedy_matches_bruteforce_on_a_line() {
        let x = Matrix::from_fn(20, 1, |i, _| (i as f64 * 0.37).sin() * 4.0 + i as f64 * 0.1);
        let kernel = GaussianKernel::new(1.0).unwrap();
        let set = sample_greedy(&x, &kernel, 3, 0).unwrap();
        assert_eq!(set.source_indices, greedy_oracle(&x, &kernel, 3));
        let x2 = random_points(30, 3, 8);
        let set = sample_greedy(&x2, &kernel, 8, 0).unwrap();
        assert_eq!(set.source_indices, greedy_oracle(&x2, &kernel, 8));
    }

    /// The landmark Gram stays PSD and every selected Schur complement is positive.
    #[test]
    fn greedy_selection_keeps_gram_psd() {
        let x = random_points(40, 2, 4);
        let kernel = GaussianKernel::new(0.5).unwrap();
        let set = sample_greedy(&x, &kernel, 12, 0).unwrap();
        let km = kernel.gram_sym(&set.points);
        let eig = sym_eigen(km.order(), km.as_slice()).unwrap();
        assert!(eig.values[0] > -1e-8);
        for t in 1..set.len() {
            let kt = Matrix::from_fn(t, t, |a, b| km.get(a, b));
            let phi: Vec<f64> = (0..t).map(|a| km.get(t, a)).collect();
            let sol = solve_small(&kt, &phi).unwrap();
            let schur = 1.0 - phi.iter().zip(&sol).map(|(a, b)| a * b).sum::<f64>();
            assert!(schur >= -1e-8);
        }
    }
}
