//! Closed-form sketches of Dirac and diagonal-Gaussian atoms and their
//! Jacobian-transpose products, for both feature map families.
//!
//! Everything is computed in "raw" coordinates first: for a Nyström map the
//! raw feature of an atom is the vector `f(θ)_i = E_{x∼P_θ} κ(x, x̃_i)`, and the
//! sketch is `K_m^{-1/2} f(θ)`. A product `Jᵀ y` is then `J_fᵀ z` with
//! `z = K_m^{-1/2} y`, which lets the decoder apply the `m × m` factor once
//! per residual instead of once per atom.

use crate::error::{check_dim, Error, Result};
use crate::features::{FeatureMap, NystromMap, RffMap};
use crate::linalg::dot;

/// Atom parameter layout: Dirac `θ = c`, Gaussian `θ = (μ, γ)` with `γ` the covariance diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomFamily {
    Dirac,
    Gaussian,
}

impl AtomFamily {
    pub fn param_len(self, d: usize) -> usize {
        match self {
            AtomFamily::Dirac => d,
            AtomFamily::Gaussian => 2 * d,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AtomFamily::Dirac => "dirac",
            AtomFamily::Gaussian => "gaussian",
        }
    }
}

fn nystrom_dirac_raw(map: &NystromMap, c: &[f64], out: &mut [f64]) {
    map.kernel_column(c, out);
}

/// Column of `F(θ, x̃) = σ^d Π(γ_j + σ²)^{-1/2} exp(−½ Σ (x̃_j − μ_j)² / (γ_j + σ²))`.
fn nystrom_gauss_raw(map: &NystromMap, mu: &[f64], gamma: &[f64], out: &mut [f64]) {
    let s2 = map.kernel().bandwidth_sq();
    let log_pref: f64 = gamma.iter().map(|g| 0.5 * (s2 / (g + s2)).ln()).sum();
    let inv: Vec<f64> = gamma.iter().map(|g| 1.0 / (g + s2)).collect();
    for (o, x) in out.iter_mut().zip(map.points().iter_rows()) {
        let mut q = 0.0;
        for ((xj, mj), ij) in x.iter().zip(mu).zip(&inv) {
            let t = xj - mj;
            q += t * t * ij;
        }
        *o = (log_pref - 0.5 * q).exp();
    }
}

/// `−(1/σ²) [ (fᵀz) c − X̃ (z ⊙ f) ]`.
fn nystrom_dirac_vjp(map: &NystromMap, c: &[f64], z: &[f64], f: &[f64], grad: &mut [f64]) {
    let s2 = map.kernel().bandwidth_sq();
    let fz = dot(f, z);
    for (g, cj) in grad.iter_mut().zip(c) {
        *g = -fz * cj;
    }
    for ((x, fi), zi) in map.points().iter_rows().zip(f).zip(z) {
        let w = fi * zi;
        for (g, xj) in grad.iter_mut().zip(x) {
            *g += w * xj;
        }
    }
    for g in grad.iter_mut() {
        *g /= s2;
    }
}

/// μ-block: `Γ⁻¹ ⊙ (X̃(z ⊙ f) − μ Σ_i z_i f_i)`;
/// γ-block: `½ Γ⁻¹ ⊙ ((Γ⁻¹ ⊙ μ² − 1) Σ_i (z⊙f)_i + Γ⁻¹ ⊙ (X̃^{⊙2} − 2 μ ⊙ X̃)(z ⊙ f))`,
/// with `Γ⁻¹ = 1 / (γ + σ²)` entry-wise.
fn nystrom_gauss_vjp(map: &NystromMap, mu: &[f64], gamma: &[f64], z: &[f64], f: &[f64], grad: &mut [f64]) {
    let d = mu.len();
    let s2 = map.kernel().bandwidth_sq();
    let inv: Vec<f64> = gamma.iter().map(|g| 1.0 / (g + s2)).collect();
    let mut lin = vec![0.0; d]; // X̃(z ⊙ f)
    let mut quad = vec![0.0; d]; // X̃^{⊙2}(z ⊙ f)
    let mut total = 0.0;
    for ((x, fi), zi) in map.points().iter_rows().zip(f).zip(z) {
        let w = fi * zi;
        total += w;
        for j in 0..d {
            lin[j] += w * x[j];
            quad[j] += w * x[j] * x[j];
        }
    }
    let (gmu, ggamma) = grad.split_at_mut(d);
    for j in 0..d {
        gmu[j] = inv[j] * (lin[j] - mu[j] * total);
        ggamma[j] = 0.5 * inv[j] * ((inv[j] * mu[j] * mu[j] - 1.0) * total + inv[j] * (quad[j] - 2.0 * mu[j] * lin[j]));
    }
}

fn rff_raw(map: &RffMap, mu: &[f64], gamma: Option<&[f64]>, out: &mut [f64]) {
    let half = map.m_half();
    let s = map.scale();
    for (l, w) in map.omega().iter_rows().enumerate() {
        let damp = gamma.map_or(1.0, |g| (-0.5 * w.iter().zip(g).map(|(wj, gj)| wj * wj * gj).sum::<f64>()).exp());
        let (sin, cos) = dot(w, mu).sin_cos();
        out[l] = cos * damp * s;
        out[half + l] = sin * damp * s;
    }
}

fn rff_vjp(map: &RffMap, mu: &[f64], gamma: Option<&[f64]>, z: &[f64], grad: &mut [f64]) {
    let d = mu.len();
    let half = map.m_half();
    let s = map.scale();
    grad.iter_mut().for_each(|g| *g = 0.0);
    for (l, w) in map.omega().iter_rows().enumerate() {
        let damp = gamma.map_or(1.0, |g| (-0.5 * w.iter().zip(g).map(|(wj, gj)| wj * wj * gj).sum::<f64>()).exp());
        let (sin, cos) = dot(w, mu).sin_cos();
        let (zc, zs) = (z[l], z[half + l]);
        let dmu = (zs * cos - zc * sin) * damp * s;
        for j in 0..d {
            grad[j] += dmu * w[j];
        }
        if gamma.is_some() {
            let val = (zc * cos + zs * sin) * damp * s;
            for j in 0..d {
                grad[d + j] -= 0.5 * val * w[j] * w[j];
            }
        }
    }
}

/// Raw features `f(θ)` of an atom (before the map's output transform).
pub(crate) fn raw_atom(map: &FeatureMap, family: AtomFamily, theta: &[f64], out: &mut [f64]) {
    let d = map.input_dim();
    match (map, family) {
        (FeatureMap::Nystrom(n), AtomFamily::Dirac) => nystrom_dirac_raw(n, theta, out),
        (FeatureMap::Nystrom(n), AtomFamily::Gaussian) => nystrom_gauss_raw(n, &theta[..d], &theta[d..], out),
        (FeatureMap::Rff(r), AtomFamily::Dirac) => rff_raw(r, theta, None, out),
        (FeatureMap::Rff(r), AtomFamily::Gaussian) => rff_raw(r, &theta[..d], Some(&theta[d..]), out),
    }
}

/// `J_f(θ)ᵀ z`; `f` must hold `raw_atom(θ)` (unused for RFF).
pub(crate) fn raw_vjp(map: &FeatureMap, family: AtomFamily, theta: &[f64], z: &[f64], f: &[f64], grad: &mut [f64]) {
    let d = map.input_dim();
    match (map, family) {
        (FeatureMap::Nystrom(n), AtomFamily::Dirac) => nystrom_dirac_vjp(n, theta, z, f, grad),
        (FeatureMap::Nystrom(n), AtomFamily::Gaussian) => nystrom_gauss_vjp(n, &theta[..d], &theta[d..], z, f, grad),
        (FeatureMap::Rff(r), AtomFamily::Dirac) => rff_vjp(r, theta, None, z, grad),
        (FeatureMap::Rff(r), AtomFamily::Gaussian) => rff_vjp(r, &theta[..d], Some(&theta[d..]), z, grad),
    }
}

fn check_gamma(gamma: &[f64]) -> Result<()> {
    if let Some(g) = gamma.iter().find(|g| !(**g >= 0.0) || !g.is_finite()) {
        return Err(Error::InvalidArgument(format!("covariance diagonal must be non-negative, got {g}")));
    }
    Ok(())
}

/// Sketch of the Dirac mass at `c`; identical to `embed(c)`.
pub fn atom_sketch_dirac(map: &FeatureMap, c: &[f64]) -> Result<Vec<f64>> {
    check_dim(map.input_dim(), c.len())?;
    let mut f = vec![0.0; map.dim()];
    raw_atom(map, AtomFamily::Dirac, c, &mut f);
    Ok(map.transform(&f))
}

/// `(∂A(δ_c)/∂c)ᵀ y`.
pub fn dirac_jvp(map: &FeatureMap, c: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_dim(map.input_dim(), c.len())?;
    check_dim(map.dim(), y.len())?;
    let mut f = vec![0.0; map.dim()];
    raw_atom(map, AtomFamily::Dirac, c, &mut f);
    let z = map.transform(y);
    let mut g = vec![0.0; c.len()];
    raw_vjp(map, AtomFamily::Dirac, c, &z, &f, &mut g);
    Ok(g)
}

/// Sketch of `N(μ, diag(γ))`.
pub fn atom_sketch_gaussian(map: &FeatureMap, mu: &[f64], gamma_diag: &[f64]) -> Result<Vec<f64>> {
    check_dim(map.input_dim(), mu.len())?;
    check_dim(map.input_dim(), gamma_diag.len())?;
    check_gamma(gamma_diag)?;
    let theta: Vec<f64> = mu.iter().chain(gamma_diag).copied().collect();
    let mut f = vec![0.0; map.dim()];
    raw_atom(map, AtomFamily::Gaussian, &theta, &mut f);
    Ok(map.transform(&f))
}

/// `((∂A/∂μ)ᵀ y, (∂A/∂γ)ᵀ y)` for the Gaussian atom `N(μ, diag(γ))`.
pub fn gaussian_jvp(map: &FeatureMap, mu: &[f64], gamma_diag: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = map.input_dim();
    check_dim(d, mu.len())?;
    check_dim(d, gamma_diag.len())?;
    check_dim(map.dim(), y.len())?;
    check_gamma(gamma_diag)?;
    let theta: Vec<f64> = mu.iter().chain(gamma_diag).copied().collect();
    let mut f = vec![0.0; map.dim()];
    raw_atom(map, AtomFamily::Gaussian, &theta, &mut f);
    let z = map.transform(y);
    let mut g = vec![0.0; 2 * d];
    raw_vjp(map, AtomFamily::Gaussian, &theta, &z, &f, &mut g);
    let gamma_part = g.split_off(d);
    Ok((g, gamma_part))
}
