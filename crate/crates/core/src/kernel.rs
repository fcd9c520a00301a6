//! Gaussian kernel, Gram matrices and the pseudo-inverse square root of a PSD matrix.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{sq_dist, sym_eigen, Matrix};

/// Default relative cutoff below which eigenvalues are treated as zero by [`psd_inv_sqrt`].
pub const DEFAULT_REL_TOL: f64 = 1e-12;

/// `κ(x, y) = exp(−‖x − y‖² / (2σ²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernel {
    bandwidth_sq: f64,
}

impl GaussianKernel {
    pub fn new(bandwidth_sq: f64) -> Result<Self> {
        if !(bandwidth_sq > 0.0 && bandwidth_sq.is_finite()) {
            return Err(Error::InvalidArgument(format!("kernel bandwidth σ² must be positive, got {bandwidth_sq}")));
        }
        Ok(Self { bandwidth_sq })
    }

    #[inline]
    pub fn bandwidth_sq(&self) -> f64 {
        self.bandwidth_sq
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(x.len(), y.len())?;
        Ok(self.eval_unchecked(x, y))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        (-sq_dist(x, y) / (2.0 * self.bandwidth_sq)).exp()
    }

    /// `n × p` matrix of kernel values between the rows of `x` and `y`.
    pub fn gram(&self, x: &Matrix, y: &Matrix) -> Result<Matrix> {
        check_dim(x.cols(), y.cols())?;
        let mut out = Matrix::zeros(x.rows(), y.rows());
        for (i, xi) in x.iter_rows().enumerate() {
            let row = out.row_mut(i);
            for (j, yj) in y.iter_rows().enumerate() {
                row[j] = self.eval_unchecked(xi, yj);
            }
        }
        Ok(out)
    }

    /// Symmetric Gram of `x` against itself. Only the upper triangle is evaluated,
    /// so the result is exactly symmetric.
    pub fn gram_sym(&self, x: &Matrix) -> SymMatrix {
        let n = x.rows();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
            for j in i + 1..n {
                let v = self.eval_unchecked(x.row(i), x.row(j));
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        SymMatrix { order: n, data }
    }

    /// Kernel values between `x` and every row of `points`, written into `out`.
    pub(crate) fn column_into(&self, points: &Matrix, x: &[f64], out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(points.iter_rows()) {
            *o = self.eval_unchecked(p, x);
        }
    }
}

/// Exactly symmetric square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    order: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Validates exact symmetry.
    pub fn new(order: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(order * order, data.len())?;
        for i in 0..order {
            for j in i + 1..order {
                if data[i * order + j] != data[j * order + i] {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
        }
        Ok(Self { order, data })
    }

    pub fn from_matrix(m: Matrix) -> Result<Self> {
        check_dim(m.rows(), m.cols())?;
        Self::new(m.rows(), m.as_slice().to_vec())
    }

    pub fn identity(order: usize) -> Self {
        let mut data = vec![0.0; order * order];
        for i in 0..order {
            data[i * order + i] = 1.0;
        }
        Self { order, data }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (i, &d) in diag.iter().enumerate() {
            data[i * n + i] = d;
        }
        Self { order: n, data }
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.order + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.order..(i + 1) * self.order]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.order, self.order, self.data.clone()).expect("square buffer")
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.order, v.len())?;
        Ok((0..self.order).map(|i| crate::linalg::dot(self.row(i), v)).collect())
    }

    pub(crate) fn matvec_into(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = crate::linalg::dot(self.row(i), v);
        }
    }

    /// Builds `V diag(g) Vᵀ`, symmetrized by averaging the two triangles.
    pub(crate) fn from_spectrum(vectors: &Matrix, g: &[f64]) -> Self {
        let n = vectors.rows();
        let mut data = vec![0.0; n * n];
        let kept: Vec<usize> = (0..g.len()).filter(|&l| g[l] != 0.0).collect();
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for &l in &kept {
                    s += vectors.get(i, l) * g[l] * vectors.get(j, l);
                }
                data[i * n + j] = s;
                data[j * n + i] = s;
            }
        }
        Self { order: n, data }
    }
}

/// Pseudo-inverse square root `W = V diag(g(λ)) Vᵀ` with `g(λ) = λ^{-1/2}` for
/// `λ > rel_tol·λ_max` and `0` otherwise.
///
/// Fails with [`Error::NotPsd`] if an eigenvalue lies below
/// `−max(rel_tol, 4·order·ε)·λ_max`; the second term is the accuracy floor of
/// the eigensolver itself.
pub fn psd_inv_sqrt(k: &SymMatrix, rel_tol: f64) -> Result<SymMatrix> {
    Ok(psd_inv_sqrt_with_rank(k, rel_tol)?.0)
}

/// As [`psd_inv_sqrt`], also returning the number of retained eigenvalues.
pub fn psd_inv_sqrt_with_rank(k: &SymMatrix, rel_tol: f64) -> Result<(SymMatrix, usize)> {
    if !(rel_tol > 0.0) {
        return Err(Error::InvalidArgument("rel_tol must be positive".into()));
    }
    let n = k.order();
    if n == 0 {
        return Ok((SymMatrix { order: 0, data: vec![] }, 0));
    }
    let eig = sym_eigen(n, k.as_slice())?;
    let lmax = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let neg_tol = rel_tol.max(4.0 * n as f64 * f64::EPSILON) * lmax;
    if let Some(&lo) = eig.values.first() {
        if lo < -neg_tol {
            return Err(Error::NotPsd { eigenvalue: lo, tolerance: neg_tol });
        }
    }
    let cutoff = rel_tol * lmax;
    let g: Vec<f64> = eig.values.iter().map(|&l| if l > cutoff { 1.0 / l.sqrt() } else { 0.0 }).collect();
    let rank = g.iter().filter(|&&v| v != 0.0).count();
    Ok((SymMatrix::from_spectrum(&eig.vectors, &g), rank))
}
