//! Lawson–Hanson active-set nonnegative least squares on the normal equations.

use crate::error::Result;
use crate::linalg::{dot, solve_small, Matrix};

/// `argmin_{α ≥ 0} ‖A α − b‖²` for a tall `A` given by its columns.
pub fn nnls(columns: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let k = columns.len();
    let gram = Matrix::from_fn(k, k, |i, j| dot(&columns[i], &columns[j]));
    let rhs: Vec<f64> = columns.iter().map(|c| dot(c, b)).collect();
    nnls_normal(&gram, &rhs)
}

/// NNLS given `G = AᵀA` and `h = Aᵀb`: minimizes `½ αᵀGα − hᵀα` over `α ≥ 0`.
pub fn nnls_normal(gram: &Matrix, h: &[f64]) -> Result<Vec<f64>> {
    let k = h.len();
    let scale = (0..k).fold(0.0f64, |m, i| m.max(gram.get(i, i))).max(f64::MIN_POSITIVE);
    let tol = 1e-13 * scale * (1.0 + h.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let mut x = vec![0.0; k];
    let mut passive = vec![false; k];
    // negative gradient of the quadratic
    let grad = |x: &[f64]| -> Vec<f64> { (0..k).map(|i| h[i] - dot(gram.row(i), x)).collect() };
    for _outer in 0..(3 * k + 10) {
        let w = grad(&x);
        let candidate = (0..k).filter(|&i| !passive[i] && w[i] > tol).max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(j) = candidate else { break };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let sub = Matrix::from_fn(idx.len(), idx.len(), |a, b| gram.get(idx[a], idx[b]));
            let sub_h: Vec<f64> = idx.iter().map(|&i| h[i]).collect();
            let z = match solve_small(&sub, &sub_h) {
                Ok(z) => z,
                Err(_) => {
                    // collinear column: drop the one just added
                    passive[*idx.last().expect("non-empty")] = false;
                    break;
                }
            };
            if z.iter().all(|&v| v > 0.0) {
                for (&i, &v) in idx.iter().zip(&z) {
                    x[i] = v;
                }
                break;
            }
            // step towards z until the first passive variable hits zero
            let mut alpha = 1.0f64;
            for (&i, &zi) in idx.iter().zip(&z) {
                if zi <= 0.0 {
                    alpha = alpha.min(x[i] / (x[i] - zi));
                }
            }
            for (&i, &zi) in idx.iter().zip(&z) {
                x[i] += alpha * (zi - x[i]);
                if x[i] <= 1e-15 * scale.sqrt() || (zi <= 0.0 && x[i] <= 0.0) {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    Ok(x)
}
