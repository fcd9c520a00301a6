//! Nyström and random Fourier feature maps.

use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{check_dim, Error, Result};
use crate::kernel::{psd_inv_sqrt_with_rank, GaussianKernel, SymMatrix};
use crate::landmarks::LandmarkSet;
use crate::linalg::{dot, Matrix};
use crate::rng::{stream, Purpose};

/// `Φ(x) = K_m^{-1/2} [κ(x̃_1, x), …, κ(x̃_m, x)]`.
#[derive(Debug, Clone)]
pub struct NystromMap {
    landmarks: LandmarkSet,
    kernel: GaussianKernel,
    w: SymMatrix,
    rel_tol: f64,
    rank: usize,
}

impl NystromMap {
    pub fn new(landmarks: LandmarkSet, kernel: GaussianKernel, rel_tol: f64) -> Result<Self> {
        if landmarks.is_empty() {
            return Err(Error::InvalidArgument("Nyström map needs at least one landmark".into()));
        }
        let km = kernel.gram_sym(&landmarks.points);
        let (w, rank) = psd_inv_sqrt_with_rank(&km, rel_tol)?;
        if rank < landmarks.len() {
            log::debug!("landmark Gram has rank {rank} < {}; using the pseudo-inverse", landmarks.len());
        }
        Ok(Self { landmarks, kernel, w, rel_tol, rank })
    }

    pub fn landmarks(&self) -> &LandmarkSet {
        &self.landmarks
    }

    pub fn points(&self) -> &Matrix {
        &self.landmarks.points
    }

    pub fn kernel(&self) -> &GaussianKernel {
        &self.kernel
    }

    /// The corrective factor `K_m^{-1/2}`.
    pub fn inv_sqrt(&self) -> &SymMatrix {
        &self.w
    }

    pub fn rel_tol(&self) -> f64 {
        self.rel_tol
    }

    /// Numerical rank of the landmark Gram matrix.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.landmarks.len()
    }

    pub fn input_dim(&self) -> usize {
        self.landmarks.points.cols()
    }

    /// Kernel vector `[κ(x̃_i, x)]_i` before the corrective factor.
    pub(crate) fn kernel_column(&self, x: &[f64], out: &mut [f64]) {
        self.kernel.column_into(&self.landmarks.points, x, out);
    }
}

/// `Φ(x) = [cos(Ωᵀx), sin(Ωᵀx)] / √m′` with `Ω` i.i.d. `N(0, 1/σ²)`.
#[derive(Debug, Clone)]
pub struct RffMap {
    /// `m′ × d`, one frequency per row.
    omega: Matrix,
    bandwidth_sq: f64,
    seed: u64,
}

impl RffMap {
    pub fn new(d: usize, m_half: usize, bandwidth_sq: f64, seed: u64) -> Result<Self> {
        if d == 0 || m_half == 0 {
            return Err(Error::InvalidArgument(format!("RFF map needs d >= 1 and m' >= 1, got d={d}, m'={m_half}")));
        }
        let kernel = GaussianKernel::new(bandwidth_sq)?;
        let scale = 1.0 / kernel.bandwidth_sq().sqrt();
        let mut rng = stream(seed, Purpose::RffFrequencies);
        let omega = Matrix::from_fn(m_half, d, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        });
        Ok(Self { omega, bandwidth_sq, seed })
    }

    pub fn omega(&self) -> &Matrix {
        &self.omega
    }

    pub fn m_half(&self) -> usize {
        self.omega.rows()
    }

    pub fn dim(&self) -> usize {
        2 * self.omega.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.omega.cols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bandwidth_sq(&self) -> f64 {
        self.bandwidth_sq
    }

    pub(crate) fn scale(&self) -> f64 {
        1.0 / (self.m_half() as f64).sqrt()
    }

    fn embed_into(&self, x: &[f64], out: &mut [f64]) {
        let half = self.m_half();
        let s = self.scale();
        for (l, w) in self.omega.iter_rows().enumerate() {
            let (sin, cos) = dot(w, x).sin_cos();
            out[l] = cos * s;
            out[half + l] = sin * s;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapFamily {
    Nystrom,
    Rff,
}

impl MapFamily {
    pub fn name(self) -> &'static str {
        match self {
            MapFamily::Nystrom => "nystrom",
            MapFamily::Rff => "rff",
        }
    }
}

/// Either feature map family; defines `embed: R^d → R^m`.
#[derive(Debug, Clone)]
pub enum FeatureMap {
    Nystrom(NystromMap),
    Rff(RffMap),
}

impl FeatureMap {
    pub fn family(&self) -> MapFamily {
        match self {
            FeatureMap::Nystrom(_) => MapFamily::Nystrom,
            FeatureMap::Rff(_) => MapFamily::Rff,
        }
    }

    /// Sketch dimension `m`.
    pub fn dim(&self) -> usize {
        match self {
            FeatureMap::Nystrom(n) => n.dim(),
            FeatureMap::Rff(r) => r.dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            FeatureMap::Nystrom(n) => n.input_dim(),
            FeatureMap::Rff(r) => r.input_dim(),
        }
    }

    pub fn bandwidth_sq(&self) -> f64 {
        match self {
            FeatureMap::Nystrom(n) => n.kernel.bandwidth_sq(),
            FeatureMap::Rff(r) => r.bandwidth_sq,
        }
    }

    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        let mut raw = vec![0.0; self.dim()];
        self.raw_embed_into(x, &mut raw);
        Ok(self.transform(&raw))
    }

    /// Pre-transform features: the kernel column for Nyström, the embedding itself for RFF.
    pub(crate) fn raw_embed_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            FeatureMap::Nystrom(n) => n.kernel_column(x, out),
            FeatureMap::Rff(r) => r.embed_into(x, out),
        }
    }

    /// Linear output transform applied to raw features (`K_m^{-1/2}` or identity).
    /// Symmetric, so it is also its own adjoint.
    pub(crate) fn transform(&self, raw: &[f64]) -> Vec<f64> {
        match self {
            FeatureMap::Nystrom(n) => {
                let mut out = vec![0.0; raw.len()];
                n.w.matvec_into(raw, &mut out);
                out
            }
            FeatureMap::Rff(_) => raw.to_vec(),
        }
    }

    /// Canonical byte encoding of everything that defines the map.
    pub(crate) fn parameter_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        match self {
            FeatureMap::Nystrom(n) => {
                b.push(0u8);
                b.extend_from_slice(&n.kernel.bandwidth_sq().to_le_bytes());
                b.extend_from_slice(&n.rel_tol.to_le_bytes());
                b.extend_from_slice(&(n.points().rows() as u64).to_le_bytes());
                b.extend_from_slice(&(n.points().cols() as u64).to_le_bytes());
                for v in n.points().as_slice() {
                    b.extend_from_slice(&v.to_le_bytes());
                }
            }
            FeatureMap::Rff(r) => {
                b.push(1u8);
                b.extend_from_slice(&r.bandwidth_sq.to_le_bytes());
                b.extend_from_slice(&r.seed.to_le_bytes());
                b.extend_from_slice(&(r.input_dim() as u64).to_le_bytes());
                b.extend_from_slice(&(r.m_half() as u64).to_le_bytes());
            }
        }
        b
    }

    /// Stable 64-bit hash of the map parameters.
    pub fn fingerprint(&self) -> u64 {
        let digest = Sha256::digest(self.parameter_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

impl From<NystromMap> for FeatureMap {
    fn from(m: NystromMap) -> Self {
        FeatureMap::Nystrom(m)
    }
}

impl From<RffMap> for FeatureMap {
    fn from(m: RffMap) -> Self {
        FeatureMap::Rff(m)
    }
}

pub fn build_nystrom(landmarks: LandmarkSet, kernel: GaussianKernel, rel_tol: f64) -> Result<FeatureMap> {
    Ok(NystromMap::new(landmarks, kernel, rel_tol)?.into())
}

pub fn build_rff(d: usize, m_half: usize, bandwidth_sq: f64, seed: u64) -> Result<FeatureMap> {
    Ok(RffMap::new(d, m_half, bandwidth_sq, seed)?.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::DEFAULT_REL_TOL;
    use crate::landmarks::{sample_uniform, SamplingMethod};
    use crate::linalg::norm;
    use rand::Rng as _;

    fn landmarks_from(points: Matrix) -> LandmarkSet {
        let n = points.rows();
        LandmarkSet {
            points,
            source_indices: (0..n).collect(),
            method: SamplingMethod::Uniform,
            seed: 0,
            als_lambda: None,
            rank_exhausted: false,
        }
    }

    fn random_points(n: usize, d: usize, seed: u64, half_width: f64) -> Matrix {
        let mut rng = stream(seed, Purpose::Theory);
        Matrix::from_fn(n, d, |_, _| rng.gen_range(-half_width..half_width))
    }

    #[test]
    fn single_landmark_map() {
        let kernel = GaussianKernel::new(2.0).unwrap();
        let lm = Matrix::from_rows(&[[1.0, -1.0]]).unwrap();
        let map = NystromMap::new(landmarks_from(lm), kernel, DEFAULT_REL_TOL).unwrap();
        assert!((map.inv_sqrt().get(0, 0) - 1.0).abs() < 1e-15);
        let fmap = FeatureMap::from(map);
        let x = [0.2, 0.3];
        let e = fmap.embed(&x).unwrap();
        assert!((e[0] - kernel.eval(&[1.0, -1.0], &x).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn duplicated_landmarks_give_rank_one_factor() {
        let kernel = GaussianKernel::new(2.0).unwrap();
        let lm = Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]).unwrap();
        let map = NystromMap::new(landmarks_from(lm), kernel, DEFAULT_REL_TOL).unwrap();
        assert_eq!(map.rank(), 1);
        let eig = crate::linalg::sym_eigen(2, map.inv_sqrt().as_slice()).unwrap();
        assert!(eig.values[0].abs() < 1e-12 && eig.values[1] > 0.1);
    }

    #[test]
    fn gram_reproduction_at_landmarks() {
        let x = random_points(300, 4, 1, 2.0);
        let kernel = GaussianKernel::new(4.0).unwrap();
        let set = sample_uniform(&x, 50, 3).unwrap();
        let map = FeatureMap::from(NystromMap::new(set.clone(), kernel, DEFAULT_REL_TOL).unwrap());
        let emb: Vec<Vec<f64>> = set.points.iter_rows().map(|r| map.embed(r).unwrap()).collect();
        let mut frob = 0.0;
        for i in 0..50 {
            for j in 0..50 {
                let d = dot(&emb[i], &emb[j]) - kernel.eval(set.points.row(i), set.points.row(j)).unwrap();
                frob += d * d;
            }
            assert!((norm(&emb[i]).powi(2) - 1.0).abs() < 1e-8);
        }
        assert!(frob.sqrt() <= 1e-8, "{}", frob.sqrt());
    }

    #[test]
    fn nystrom_embedding_is_a_contraction() {
        let x = random_points(80, 3, 2, 2.0);
        let kernel = GaussianKernel::new(1.0).unwrap();
        let map = FeatureMap::from(NystromMap::new(sample_uniform(&x, 20, 1).unwrap(), kernel, DEFAULT_REL_TOL).unwrap());
        for p in random_points(200, 3, 4, 4.0).iter_rows() {
            assert!(norm(&map.embed(p).unwrap()) <= 1.0 + 1e-10);
        }
    }

    /// With every dataset point as a landmark, inner products reproduce the kernel everywhere.
    #[test]
    fn completeness_limit() {
        let x = random_points(40, 2, 5, 2.0);
        let kernel = GaussianKernel::new(0.5).unwrap();
        let map = FeatureMap::from(NystromMap::new(landmarks_from(x.clone()), kernel, DEFAULT_REL_TOL).unwrap());
        let emb: Vec<Vec<f64>> = x.iter_rows().map(|r| map.embed(r).unwrap()).collect();
        for i in 0..40 {
            for j in 0..40 {
                let k = kernel.eval(x.row(i), x.row(j)).unwrap();
                assert!((dot(&emb[i], &emb[j]) - k).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn rff_embedding_properties() {
        let d = 3;
        let map = build_rff(d, 64, 2.0, 9).unwrap();
        let zero = map.embed(&[0.0; 3]).unwrap();
        let s = 1.0 / 8.0;
        assert!(zero[..64].iter().all(|&v| (v - s).abs() < 1e-16));
        assert!(zero[64..].iter().all(|&v| v == 0.0));
        for p in random_points(20, d, 1, 5.0).iter_rows() {
            assert!((norm(&map.embed(p).unwrap()) - 1.0).abs() < 1e-14);
        }
        let again = build_rff(d, 64, 2.0, 9).unwrap();
        let (FeatureMap::Rff(a), FeatureMap::Rff(b)) = (&map, &again) else { unreachable!() };
        assert_eq!(a.omega(), b.omega());
        assert_eq!(map.fingerprint(), again.fingerprint());
        assert_ne!(map.fingerprint(), build_rff(d, 64, 2.0, 10).unwrap().fingerprint());
        assert!(map.embed(&[0.0; 2]).is_err());
        assert!(build_rff(d, 0, 2.0, 1).is_err());
    }

    #[test]
    fn rff_approximates_the_kernel() {
        let d = 4;
        let sigma_sq = 3.0;
        let map = build_rff(d, 10_000, sigma_sq, 21).unwrap();
        let kernel = GaussianKernel::new(sigma_sq).unwrap();
        let xs = random_points(100, d, 6, 1.5);
        let ys = random_points(100, d, 7, 1.5);
        for (x, y) in xs.iter_rows().zip(ys.iter_rows()) {
            let approx = dot(&map.embed(x).unwrap(), &map.embed(y).unwrap());
            assert!((approx - kernel.eval(x, y).unwrap()).abs() <= 0.05);
        }
    }
}
