//! Risks, clustering agreement and center matching.

use std::collections::HashMap;
use std::f64::consts::PI;

use super::{Hypothesis, Task};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{sq_dist, Matrix};

/// Mean over rows of `min_i ‖x − h_i‖^p`, for `p` 1 (k-medians) or 2 (k-means).
pub fn kmeans_risk(x: &Matrix, centers: &Matrix, p: u32) -> Result<f64> {
    if centers.rows() == 0 {
        return Err(Error::InvalidArgument("no centers".into()));
    }
    check_dim(centers.cols(), x.cols())?;
    if p != 1 && p != 2 {
        return Err(Error::InvalidArgument(format!("p must be 1 or 2, got {p}")));
    }
    let total: f64 = x
        .iter_rows()
        .map(|row| {
            let best = centers.iter_rows().map(|c| sq_dist(row, c)).fold(f64::INFINITY, f64::min);
            if p == 2 { best } else { best.sqrt() }
        })
        .sum();
    Ok(total / x.rows() as f64)
}

/// `log α + log N(x; μ, diag γ)`.
pub(crate) fn log_component(x: &[f64], mu: &[f64], gamma: &[f64], weight: f64) -> f64 {
    let mut acc = 0.0;
    for ((xi, mi), gi) in x.iter().zip(mu).zip(gamma) {
        acc += (2.0 * PI * gi).ln() + (xi - mi) * (xi - mi) / gi;
    }
    weight.ln() - 0.5 * acc
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Mean negative log-likelihood of a diagonal Gaussian mixture.
pub fn gmm_nll(x: &Matrix, h: &Hypothesis) -> Result<f64> {
    let (Task::GaussianModel, Some(gammas), Some(weights)) = (h.task(), h.gammas(), h.weights()) else {
        return Err(Error::InvalidArgument("negative log-likelihood needs a Gaussian model".into()));
    };
    check_dim(h.dim(), x.cols())?;
    if gammas.as_slice().iter().any(|g| !(*g > 0.0)) {
        return Err(Error::InvalidArgument("variances must be positive".into()));
    }
    let mut buf = vec![0.0; h.k()];
    let mut total = 0.0;
    for row in x.iter_rows() {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = log_component(row, h.centers().row(i), gammas.row(i), weights[i]);
        }
        total -= log_sum_exp(&buf);
    }
    Ok(total / x.rows() as f64)
}

fn choose2(n: u64) -> f64 {
    (n as f64) * (n.saturating_sub(1) as f64) / 2.0
}

/// Adjusted Rand index from the contingency table. Two single-cluster
/// labelings, where the index is undefined, score 1.
pub fn adjusted_rand_index(pred: &[i64], truth: &[i64]) -> Result<f64> {
    check_dim(truth.len(), pred.len())?;
    let n = pred.len() as u64;
    let mut table: HashMap<(i64, i64), u64> = HashMap::new();
    let mut rows: HashMap<i64, u64> = HashMap::new();
    let mut cols: HashMap<i64, u64> = HashMap::new();
    for (&a, &b) in pred.iter().zip(truth) {
        *table.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = a * b / total;
    let max = 0.5 * (a + b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Minimum-cost assignment of every row of `cost` to a distinct column
/// (requires rows ≤ cols). Returns the column of each row.
pub fn hungarian(cost: &Matrix) -> Result<Vec<usize>> {
    let (n, m) = (cost.rows(), cost.cols());
    if n > m {
        return Err(Error::InvalidArgument(format!("cannot assign {n} rows to {m} columns")));
    }
    // potentials formulation, 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            if j1 == 0 {
                return Err(Error::Numerical("non-finite assignment cost".into()));
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    Ok(assignment)
}

/// Largest distance between matched centers under the matching that
/// minimizes the total squared distance. Sets must have equal size.
pub fn matched_center_error(a: &Matrix, b: &Matrix) -> Result<f64> {
    check_dim(a.rows(), b.rows())?;
    check_dim(a.cols(), b.cols())?;
    let cost = Matrix::from_fn(a.rows(), b.rows(), |i, j| sq_dist(a.row(i), b.row(j)));
    let assignment = hungarian(&cost)?;
    Ok(assignment.iter().enumerate().map(|(i, &j)| cost.get(i, j).sqrt()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_matrix(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = crate::rng::Rng::seed_from_u64(seed);
        Matrix::from_fn(n, d, |_, _| rng.gen_range(-3.0..3.0))
    }

    #[test]
    fn risk_with_every_point_as_center_is_zero() {
        let x = random_matrix(30, 3, 1);
        assert_eq!(kmeans_risk(&x, &x, 2).unwrap(), 0.0);
        assert_eq!(kmeans_risk(&x, &x, 1).unwrap(), 0.0);
    }

    #[test]
    fn risk_at_the_mean_is_total_variance() {
        let x = random_matrix(200, 4, 2);
        let n = x.rows() as f64;
        let mean: Vec<f64> = (0..4).map(|j| x.iter_rows().map(|r| r[j]).sum::<f64>() / n).collect();
        let trace: f64 = (0..4).map(|j| x.iter_rows().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sum();
        let risk = kmeans_risk(&x, &Matrix::from_rows(&[mean]).unwrap(), 2).unwrap();
        assert!((risk - trace).abs() < 1e-12 * trace);
    }

    #[test]
    fn risk_argument_errors() {
        let x = random_matrix(5, 2, 3);
        assert!(kmeans_risk(&x, &Matrix::zeros(0, 2), 2).is_err());
        assert!(kmeans_risk(&x, &Matrix::zeros(1, 3), 2).is_err());
        assert!(kmeans_risk(&x, &Matrix::zeros(1, 2), 3).is_err());
    }

    proptest! {
        #[test]
        fn appending_a_center_never_increases_risk(seed in 0u64..1000, p in 1u32..=2) {
            let x = random_matrix(40, 2, seed);
            let c = random_matrix(4, 2, seed + 7);
            let c_more = Matrix::from_fn(5, 2, |i, j| if i < 4 { c.get(i, j) } else { x.get(0, j) });
            prop_assert!(kmeans_risk(&x, &c_more, p).unwrap() <= kmeans_risk(&x, &c, p).unwrap());
        }

        #[test]
        fn nll_is_permutation_invariant(seed in 0u64..1000) {
            let x = random_matrix(30, 2, seed);
            let c = random_matrix(3, 2, seed + 1);
            let g = Matrix::from_fn(3, 2, |i, j| 0.5 + (i + j) as f64 * 0.3);
            let w = vec![0.2, 0.5, 0.3];
            let h = Hypothesis::gaussian(c.clone(), g.clone(), w.clone()).unwrap();
            let perm = [2usize, 0, 1];
            let hp = Hypothesis::gaussian(
                c.select_rows(&perm),
                g.select_rows(&perm),
                perm.iter().map(|&i| w[i]).collect(),
            ).unwrap();
            prop_assert!((gmm_nll(&x, &h).unwrap() - gmm_nll(&x, &hp).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn nll_at_the_one_dimensional_mle() {
        let x = random_matrix(500, 1, 5);
        let n = x.rows() as f64;
        let mean = x.as_slice().iter().sum::<f64>() / n;
        let var = x.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let h = Hypothesis::gaussian(
            Matrix::from_rows(&[[mean]]).unwrap(),
            Matrix::from_rows(&[[var]]).unwrap(),
            vec![1.0],
        )
        .unwrap();
        let expected = 0.5 * (2.0 * PI * var).ln() + 0.5;
        assert!((gmm_nll(&x, &h).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn splitting_a_component_keeps_the_nll() {
        let x = random_matrix(100, 3, 6);
        let c = random_matrix(2, 3, 7);
        let g = Matrix::from_fn(2, 3, |i, j| 1.0 + 0.1 * (i * 3 + j) as f64);
        let h = Hypothesis::gaussian(c.clone(), g.clone(), vec![0.4, 0.6]).unwrap();
        let idx = [0usize, 1, 1];
        let split = Hypothesis::gaussian(c.select_rows(&idx), g.select_rows(&idx), vec![0.4, 0.3, 0.3]).unwrap();
        assert!((gmm_nll(&x, &h).unwrap() - gmm_nll(&x, &split).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn nll_is_stable_far_from_the_model() {
        let x = Matrix::from_rows(&[[1e3]]).unwrap();
        let h = Hypothesis::gaussian(Matrix::from_rows(&[[0.0]]).unwrap(), Matrix::from_rows(&[[1e-4]]).unwrap(), vec![1.0])
            .unwrap();
        let nll = gmm_nll(&x, &h).unwrap();
        assert!(nll.is_finite() && nll > 1e9);
        assert!(gmm_nll(&x, &Hypothesis::kmeans(Matrix::zeros(1, 1))).is_err());
    }

    fn ari_by_pairs(a: &[i64], b: &[i64]) -> f64 {
        // brute-force pair counting
        let n = a.len();
        let (mut both, mut only_a, mut only_b, mut pairs) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let sa = a[i] == a[j];
                let sb = b[i] == b[j];
                pairs += 1.0;
                if sa && sb {
                    both += 1.0;
                }
                if sa {
                    only_a += 1.0;
                }
                if sb {
                    only_b += 1.0;
                }
            }
        }
        let expected = only_a * only_b / pairs;
        (both - expected) / (0.5 * (only_a + only_b) - expected)
    }

    #[test]
    fn ari_reference_cases() {
        let truth: Vec<i64> = (0..30).map(|i| i % 3).collect();
        assert_eq!(adjusted_rand_index(&truth, &truth).unwrap(), 1.0);
        let relabeled: Vec<i64> = truth.iter().map(|l| 10 - l).collect();
        assert_eq!(adjusted_rand_index(&relabeled, &truth).unwrap(), 1.0);
        let single = vec![0; 30];
        assert!(adjusted_rand_index(&single, &truth).unwrap().abs() < 1e-12);
        assert!(adjusted_rand_index(&single, &truth[..29]).is_err());
        let mut rng = crate::rng::Rng::seed_from_u64(42);
        for _ in 0..20 {
            let a: Vec<i64> = (0..30).map(|_| rng.gen_range(0..3)).collect();
            let b: Vec<i64> = (0..30).map(|_| rng.gen_range(0..3)).collect();
            let fast = adjusted_rand_index(&a, &b).unwrap();
            assert!((fast - ari_by_pairs(&a, &b)).abs() < 1e-12);
        }
    }

    fn brute_force_assignment(cost: &Matrix) -> f64 {
        fn rec(cost: &Matrix, row: usize, used: &mut Vec<bool>) -> f64 {
            if row == cost.rows() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..cost.cols() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost.get(row, j) + rec(cost, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(cost, 0, &mut vec![false; cost.cols()])
    }

    proptest! {
        #[test]
        fn hungarian_matches_brute_force(seed in 0u64..500, n in 1usize..6, extra in 0usize..2) {
            let cost = random_matrix(n, n + extra, seed);
            let a = hungarian(&cost).unwrap();
            let mut cols = a.clone();
            cols.sort_unstable();
            cols.dedup();
            prop_assert_eq!(cols.len(), n);
            let total: f64 = a.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum();
            prop_assert!((total - brute_force_assignment(&cost)).abs() < 1e-9);
        }
    }

    #[test]
    fn matched_error_ignores_order() {
        let a = Matrix::from_rows(&[[0.0, 0.0], [5.0, 5.0], [-4.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[[-4.0, 1.5], [0.0, 0.1], [5.0, 5.0]]).unwrap();
        assert!((matched_center_error(&a, &b).unwrap() - 0.5).abs() < 1e-15);
    }
}
