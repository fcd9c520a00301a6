//! Recovering mixtures from a sketch by greedy moment matching.

mod atoms;
mod nnls;
mod ompr;

pub use atoms::{atom_sketch_dirac, atom_sketch_gaussian, dirac_jvp, gaussian_jvp, AtomFamily};
pub use nnls::{nnls, nnls_normal};
pub use ompr::{cl_ompr, cl_ompr_warm, cl_ompr_with_report, DecodeReport};


use crate::error::{check_dim, Error, Result};
use crate::features::FeatureMap;
use crate::linalg::{axpy, Matrix};
use crate::tasks::{Hypothesis, Task};

#[derive(Debug, Clone, PartialEq)]
pub struct DiracAtom {
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianAtom {
    pub mu: Vec<f64>,
    pub gamma_diag: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    Dirac(DiracAtom),
    Gaussian(GaussianAtom),
}

impl Atom {
    pub fn family(&self) -> AtomFamily {
        match self {
            Atom::Dirac(_) => AtomFamily::Dirac,
            Atom::Gaussian(_) => AtomFamily::Gaussian,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Atom::Dirac(a) => a.c.len(),
            Atom::Gaussian(a) => a.mu.len(),
        }
    }

    /// Location of the atom (Dirac position or Gaussian mean).
    pub fn center(&self) -> &[f64] {
        match self {
            Atom::Dirac(a) => &a.c,
            Atom::Gaussian(a) => &a.mu,
        }
    }

    /// Flat parameter vector: `c`, or `μ` followed by `γ`.
    pub(crate) fn params(&self) -> Vec<f64> {
        match self {
            Atom::Dirac(a) => a.c.clone(),
            Atom::Gaussian(a) => a.mu.iter().chain(&a.gamma_diag).copied().collect(),
        }
    }

    pub(crate) fn from_params(family: AtomFamily, theta: &[f64]) -> Atom {
        match family {
            AtomFamily::Dirac => Atom::Dirac(DiracAtom { c: theta.to_vec() }),
            AtomFamily::Gaussian => {
                let d = theta.len() / 2;
                Atom::Gaussian(GaussianAtom { mu: theta[..d].to_vec(), gamma_diag: theta[d..].to_vec() })
            }
        }
    }

    /// Sketch of this atom under `map`.
    pub fn sketch(&self, map: &FeatureMap) -> Result<Vec<f64>> {
        match self {
            Atom::Dirac(a) => atom_sketch_dirac(map, &a.c),
            Atom::Gaussian(a) => atom_sketch_gaussian(map, &a.mu, &a.gamma_diag),
        }
    }
}

/// Weighted combination of atoms from a single family.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    family: AtomFamily,
    atoms: Vec<Atom>,
    weights: Vec<f64>,
}

impl Mixture {
    pub fn new(family: AtomFamily, atoms: Vec<Atom>, weights: Vec<f64>) -> Result<Self> {
        check_dim(atoms.len(), weights.len())?;
        if atoms.iter().any(|a| a.family() != family) {
            return Err(Error::InvalidArgument("mixture atoms must share one family".into()));
        }
        if let Some(d) = atoms.first().map(Atom::dim) {
            if atoms.iter().any(|a| a.dim() != d) {
                return Err(Error::InvalidArgument("mixture atoms must share one dimension".into()));
            }
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("mixture weights must be non-negative".into()));
        }
        Ok(Self { family, atoms, weights })
    }

    pub fn family(&self) -> AtomFamily {
        self.family
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Rescales the weights to sum to one.
    pub fn normalized(mut self) -> Result<Self> {
        let total: f64 = self.weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Numerical("mixture weights sum to zero".into()));
        }
        self.weights.iter_mut().for_each(|w| *w /= total);
        Ok(self)
    }

    /// `Σ α_i A(P_{θ_i})`.
    pub fn sketch(&self, map: &FeatureMap) -> Result<Vec<f64>> {
        let mut out = vec![0.0; map.dim()];
        for (a, &w) in self.atoms.iter().zip(&self.weights) {
            axpy(w, &a.sketch(map)?, &mut out);
        }
        Ok(out)
    }
}

/// Settings of the greedy decoder. `box_radius` and `gamma_floor` default to
/// values derived from the sketch (1.5 × data radius, 1e-6 σ²) when `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderOptions {
    pub k: usize,
    pub replacement_sweeps: usize,
    pub local_iters: usize,
    pub global_iters: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub init_candidates: usize,
    pub seed: u64,
    pub box_radius: Option<f64>,
    pub gamma_floor: Option<f64>,
}

impl DecoderOptions {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            replacement_sweeps: k,
            local_iters: 100,
            global_iters: 200,
            grad_tol: 1e-12,
            step_tol: 1e-10,
            init_candidates: 50,
            seed: 0,
            box_radius: None,
            gamma_floor: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if !(self.grad_tol > 0.0 && self.step_tol > 0.0) {
            return Err(Error::InvalidArgument("decoder tolerances must be positive".into()));
        }
        if self.init_candidates == 0 {
            return Err(Error::InvalidArgument("init_candidates must be at least 1".into()));
        }
        Ok(())
    }
}

/// Turns a decoded mixture into a task hypothesis: k-means keeps the Dirac
/// locations and drops the weights, Gaussian modeling keeps every parameter.
pub fn extract_hypothesis(mixture: &Mixture, task: Task) -> Result<Hypothesis> {
    if mixture.is_empty() {
        return Err(Error::InvalidArgument("cannot extract a hypothesis from an empty mixture".into()));
    }
    let d = mixture.atoms[0].dim();
    let centers = Matrix::from_fn(mixture.len(), d, |i, j| mixture.atoms[i].center()[j]);
    match (task, mixture.family) {
        (Task::KMeans, AtomFamily::Dirac) => Ok(Hypothesis::kmeans(centers)),
        (Task::GaussianModel, AtomFamily::Gaussian) => {
            let gammas = Matrix::from_fn(mixture.len(), d, |i, j| match &mixture.atoms[i] {
                Atom::Gaussian(g) => g.gamma_diag[j],
                Atom::Dirac(_) => unreachable!("family checked"),
            });
            let total: f64 = mixture.weights.iter().sum();
            let weights = mixture.weights.iter().map(|w| w / total).collect();
            Hypothesis::gaussian(centers, gammas, weights)
        }
        (task, family) => Err(Error::InvalidArgument(format!(
            "task {} cannot be served by a {} mixture",
            task.name(),
            family.name()
        ))),
    }
}
