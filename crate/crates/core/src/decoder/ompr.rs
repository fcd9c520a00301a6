//! CL-OMPR: orthogonal matching pursuit with replacement over a continuous
//! dictionary of atoms, followed by joint projected-gradient refinement.

use std::collections::VecDeque;

use rand::Rng as _;

use super::atoms::{raw_atom, raw_vjp, AtomFamily};
use super::nnls::nnls;
use super::{Atom, DecoderOptions, Mixture};
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::linalg::{axpy, dot, norm, norm_inf};
use crate::rng::{substream, Purpose};
use crate::sketch::Sketch;

/// Weights below this after a least-squares fit evict their atom.
const EVICTION_WEIGHT: f64 = 1e-8;
const ARMIJO_C: f64 = 1e-4;

/// Diagnostics of a decoder run.
#[derive(Debug, Clone, Default)]
pub struct DecodeReport {
    /// `‖Σ α_i A(P_θi) − s‖` of the returned mixture before its weights are normalized.
    pub residual: f64,
    /// Residual after each outer iteration.
    pub iteration_residuals: Vec<f64>,
    /// Objective (squared residual) after every accepted step of each global refinement.
    pub refinement_traces: Vec<Vec<f64>>,
    /// The sketch has fewer than `2kd` entries.
    pub under_sampled: bool,
}

struct Problem<'a> {
    map: &'a FeatureMap,
    family: AtomFamily,
    s: &'a [f64],
    p: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    init_lo: Vec<f64>,
    init_hi: Vec<f64>,
    init_gamma: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(sketch: &'a Sketch, map: &'a FeatureMap, family: AtomFamily, opts: &DecoderOptions) -> Result<Self> {
        let d = map.input_dim();
        let bounds = sketch.bounds();
        let radius = opts.box_radius.unwrap_or(1.5 * bounds.radius());
        if !(radius >= 0.0) {
            return Err(Error::InvalidArgument("box radius must be non-negative".into()));
        }
        let s2 = map.bandwidth_sq();
        let floor = opts.gamma_floor.unwrap_or(1e-6 * s2);
        let gamma_max = (2.0 * radius).powi(2) + s2;
        let mut lower = vec![-radius; d];
        let mut upper = vec![radius; d];
        let init_gamma: Vec<f64> = (0..d)
            .map(|j| ((bounds.hi[j] - bounds.lo[j]) / (2.0 * opts.k as f64)).powi(2).clamp(floor, gamma_max))
            .collect();
        if family == AtomFamily::Gaussian {
            lower.extend(std::iter::repeat(floor).take(d));
            upper.extend(std::iter::repeat(gamma_max).take(d));
        }
        Ok(Self {
            map,
            family,
            s: sketch.values(),
            p: family.param_len(d),
            lower,
            upper,
            init_lo: bounds.lo.iter().map(|v| v.max(-radius)).collect(),
            init_hi: bounds.hi.iter().map(|v| v.min(radius)).collect(),
            init_gamma,
        })
    }

    fn m(&self) -> usize {
        self.map.dim()
    }

    fn project_theta(&self, theta: &mut [f64]) {
        for ((t, lo), hi) in theta.iter_mut().zip(&self.lower).zip(&self.upper) {
            *t = t.clamp(*lo, *hi);
        }
    }

    fn raw(&self, theta: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; self.m()];
        raw_atom(self.map, self.family, theta, &mut f);
        f
    }

    fn sketch_of(&self, theta: &[f64]) -> Vec<f64> {
        self.map.transform(&self.raw(theta))
    }

    /// `x = [θ_1 … θ_K, α_1 … α_K]`; returns `‖Σ α_i a_i − s‖²` and its gradient.
    fn fit_objective(&self, x: &[f64], count: usize) -> (f64, Vec<f64>) {
        let p = self.p;
        let (thetas, weights) = x.split_at(count * p);
        let raws: Vec<Vec<f64>> = thetas.chunks_exact(p).map(|t| self.raw(t)).collect();
        let mut u = vec![0.0; self.m()];
        for (f, &w) in raws.iter().zip(weights) {
            axpy(w, f, &mut u);
        }
        let mut r = self.map.transform(&u);
        for (ri, si) in r.iter_mut().zip(self.s) {
            *ri -= si;
        }
        let value = dot(&r, &r);
        let q = self.map.transform(&r);
        let mut grad = vec![0.0; x.len()];
        let (gt, gw) = grad.split_at_mut(count * p);
        for (i, (theta, f)) in thetas.chunks_exact(p).zip(&raws).enumerate() {
            let g = &mut gt[i * p..(i + 1) * p];
            raw_vjp(self.map, self.family, theta, &q, f, g);
            let scale = 2.0 * weights[i];
            g.iter_mut().for_each(|v| *v *= scale);
            gw[i] = 2.0 * dot(f, &q);
        }
        (value, grad)
    }

    /// Negative normalized correlation `−⟨a(θ), r⟩ / ‖a(θ)‖` and its gradient; `tr` is `T r`.
    fn correlation(&self, theta: &[f64], r: &[f64], tr: &[f64]) -> (f64, Vec<f64>) {
        let f = self.raw(theta);
        let a = self.map.transform(&f);
        let nu = norm(&a);
        let mut grad = vec![0.0; self.p];
        if nu < 1e-150 {
            return (0.0, grad);
        }
        let rho = dot(&a, r);
        let ta = self.map.transform(&a);
        let z: Vec<f64> = tr.iter().zip(&ta).map(|(x, y)| -(x / nu - rho * y / (nu * nu * nu))).collect();
        raw_vjp(self.map, self.family, theta, &z, &f, &mut grad);
        (-rho / nu, grad)
    }

    fn random_candidate(&self, rng: &mut crate::rng::Rng) -> Vec<f64> {
        let mut theta: Vec<f64> = self
            .init_lo
            .iter()
            .zip(&self.init_hi)
            .map(|(&lo, &hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
            .collect();
        if self.family == AtomFamily::Gaussian {
            theta.extend_from_slice(&self.init_gamma);
        }
        self.project_theta(&mut theta);
        theta
    }

    /// Best of `init_candidates` random atoms by normalized correlation, refined by gradient ascent.
    fn new_atom(&self, r: &[f64], opts: &DecoderOptions, rng: &mut crate::rng::Rng) -> Vec<f64> {
        let tr = self.map.transform(r);
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..opts.init_candidates {
            let theta = self.random_candidate(rng);
            let (v, _) = self.correlation(&theta, r, &tr);
            if best.as_ref().map_or(true, |(b, _)| v < *b) {
                best = Some((v, theta));
            }
        }
        let (_, start) = best.expect("at least one candidate");
        let result = projected_descent(
            start,
            |x| self.correlation(x, r, &tr),
            |x| self.project_theta(x),
            opts.local_iters,
            opts.step_tol,
            opts.grad_tol,
        );
        result.x
    }

    /// `s − Σ α_i a(θ_i)`, the part of the sketch not yet explained.
    fn remainder(&self, thetas: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
        let mut r = self.s.to_vec();
        for (t, &w) in thetas.iter().zip(weights) {
            axpy(-w, &self.sketch_of(t), &mut r);
        }
        r
    }
}

struct Descent {
    x: Vec<f64>,
    trace: Vec<f64>,
}

/// Curvature pairs kept by the quasi-Newton direction.
const LBFGS_MEMORY: usize = 10;

/// `−H g` with the L-BFGS two-loop recursion; `None` without history.
fn lbfgs_direction(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Option<Vec<f64>> {
    let (s_last, y_last, _) = pairs.back()?;
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        axpy(-a, y, &mut q);
        alphas.push(a);
    }
    let gamma = dot(s_last, y_last) / dot(y_last, y_last);
    q.iter_mut().for_each(|v| *v *= gamma);
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        axpy(a - b, s, &mut q);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    Some(q)
}

/// Projected quasi-Newton descent: L-BFGS directions, projection onto the
/// feasible box, Armijo backtracking along the projected path. Falls back to
/// the scaled negative gradient when the quasi-Newton step is not a descent
/// direction. Every accepted step decreases the objective.
fn projected_descent(
    mut x: Vec<f64>,
    mut eval: impl FnMut(&[f64]) -> (f64, Vec<f64>),
    project: impl Fn(&mut [f64]),
    max_iter: usize,
    step_tol: f64,
    grad_tol: f64,
) -> Descent {
    project(&mut x);
    let (mut fx, mut g) = eval(&x);
    let mut trace = vec![fx];
    if norm_inf(&g) == 0.0 || !fx.is_finite() {
        return Descent { x, trace };
    }
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(LBFGS_MEMORY);
    let mut trial = vec![0.0; x.len()];
    for _ in 0..max_iter {
        for ((tr, xi), gi) in trial.iter_mut().zip(&x).zip(&g) {
            *tr = xi - gi;
        }
        project(&mut trial);
        let pg = trial.iter().zip(&x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if pg <= grad_tol {
            break;
        }
        let gradient_step = |g: &[f64], x: &[f64]| -> Vec<f64> {
            let t = 1e-2 * norm_inf(x).max(1.0) / norm_inf(g);
            g.iter().map(|v| -t * v).collect()
        };
        let mut dir = match lbfgs_direction(&g, &pairs) {
            Some(d) if dot(&d, &g) < 0.0 => d,
            _ => gradient_step(&g, &x),
        };
        let mut accepted = None;
        let mut quasi_newton = !pairs.is_empty();
        let mut t = 1.0;
        let mut tries = 0;
        while tries < 60 {
            tries += 1;
            for ((tr, xi), di) in trial.iter_mut().zip(&x).zip(&dir) {
                *tr = xi + t * di;
            }
            project(&mut trial);
            let gd: f64 = trial.iter().zip(&x).zip(&g).map(|((a, b), gi)| (a - b) * gi).sum();
            if gd < 0.0 {
                let (ft, gt) = eval(&trial);
                if ft.is_finite() && ft <= fx + ARMIJO_C * gd {
                    accepted = Some((ft, gt));
                    break;
                }
            } else if !quasi_newton {
                break;
            }
            if gd >= 0.0 || t < 1e-10 {
                if quasi_newton {
                    // projection spoiled the quasi-Newton step: restart from the gradient
                    quasi_newton = false;
                    pairs.clear();
                    dir = gradient_step(&g, &x);
                    t = 1.0;
                    continue;
                }
            }
            t *= 0.5;
        }
        let Some((ft, gt)) = accepted else { break };
        let s_vec: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y_vec: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s_vec, &y_vec);
        let smax = norm_inf(&s_vec);
        if sy > 1e-12 * norm(&s_vec) * norm(&y_vec) && sy > 0.0 {
            if pairs.len() == LBFGS_MEMORY {
                pairs.pop_front();
            }
            pairs.push_back((s_vec, y_vec, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut trial);
        fx = ft;
        g = gt;
        trace.push(fx);
        if smax <= step_tol * (1.0 + norm_inf(&x)) {
            break;
        }
    }
    Descent { x, trace }
}

/// Runs the decoder and returns the mixture with the smallest residual among
/// iterations with at most `k` atoms, its weights normalized to sum to one.
pub fn cl_ompr(sketch: &Sketch, map: &FeatureMap, family: AtomFamily, opts: &DecoderOptions) -> Result<Mixture> {
    Ok(cl_ompr_with_report(sketch, map, family, opts)?.0)
}

pub fn cl_ompr_with_report(
    sketch: &Sketch,
    map: &FeatureMap,
    family: AtomFamily,
    opts: &DecoderOptions,
) -> Result<(Mixture, DecodeReport)> {
    run(sketch, map, family, opts, None)
}

/// As [`cl_ompr_with_report`], starting from the atoms of `init`. The result
/// never has a larger residual than the refitted starting mixture.
pub fn cl_ompr_warm(
    sketch: &Sketch,
    map: &FeatureMap,
    family: AtomFamily,
    opts: &DecoderOptions,
    init: &Mixture,
) -> Result<(Mixture, DecodeReport)> {
    if init.family() != family {
        return Err(Error::InvalidArgument("warm start mixture has the wrong atom family".into()));
    }
    if init.len() > opts.k {
        return Err(Error::InvalidArgument("warm start mixture has more than k atoms".into()));
    }
    run(sketch, map, family, opts, Some(init))
}

fn run(
    sketch: &Sketch,
    map: &FeatureMap,
    family: AtomFamily,
    opts: &DecoderOptions,
    init: Option<&Mixture>,
) -> Result<(Mixture, DecodeReport)> {
    opts.validate()?;
    sketch.check_map(map)?;
    if sketch.values().iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidArgument("cannot decode a zero sketch".into()));
    }
    let d = map.input_dim();
    let k = opts.k;
    let mut report = DecodeReport { under_sampled: map.dim() < 2 * k * d, ..Default::default() };
    if report.under_sampled {
        log::warn!("sketch size {} is below 2kd = {}", map.dim(), 2 * k * d);
    }
    let prob = Problem::new(sketch, map, family, opts)?;
    let p = prob.p;

    let mut thetas: Vec<Vec<f64>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut best: Option<(f64, Vec<Vec<f64>>, Vec<f64>)> = None;

    let refit = |thetas: &mut Vec<Vec<f64>>, weights: &mut Vec<f64>, report: &mut DecodeReport| -> Result<f64> {
        if thetas.is_empty() {
            weights.clear();
            return Ok(norm(prob.s));
        }
        let columns: Vec<Vec<f64>> = thetas.iter().map(|t| prob.sketch_of(t)).collect();
        *weights = nnls(&columns, prob.s)?;
        let mut keep = weights.iter().map(|&w| w >= EVICTION_WEIGHT);
        let mut kept_w = Vec::new();
        thetas.retain(|_| keep.next().unwrap_or(false));
        for &w in weights.iter() {
            if w >= EVICTION_WEIGHT {
                kept_w.push(w);
            }
        }
        *weights = kept_w;
        if thetas.is_empty() {
            return Ok(norm(prob.s));
        }
        let count = thetas.len();
        let x0: Vec<f64> = thetas.iter().flatten().chain(weights.iter()).copied().collect();
        let desc = projected_descent(
            x0,
            |x| prob.fit_objective(x, count),
            |x| {
                let (th, w) = x.split_at_mut(count * p);
                th.chunks_exact_mut(p).for_each(|t| prob.project_theta(t));
                w.iter_mut().for_each(|v| *v = v.max(0.0));
            },
            opts.global_iters,
            opts.step_tol,
            opts.grad_tol,
        );
        let (th, w) = desc.x.split_at(count * p);
        *thetas = th.chunks_exact(p).map(|t| t.to_vec()).collect();
        *weights = w.to_vec();
        let res = desc.trace.last().copied().unwrap_or(f64::INFINITY).max(0.0).sqrt();
        report.refinement_traces.push(desc.trace);
        Ok(res)
    };

    let consider = |best: &mut Option<(f64, Vec<Vec<f64>>, Vec<f64>)>, res: f64, thetas: &[Vec<f64>], weights: &[f64]| {
        if thetas.is_empty() || thetas.len() > k || weights.iter().sum::<f64>() <= 0.0 {
            return;
        }
        if best.as_ref().map_or(true, |(b, _, _)| res < *b) {
            *best = Some((res, thetas.to_vec(), weights.to_vec()));
        }
    };

    if let Some(init) = init {
        thetas = init.atoms().iter().map(Atom::params).collect();
        for t in thetas.iter_mut() {
            prob.project_theta(t);
        }
        let res = refit(&mut thetas, &mut weights, &mut report)?;
        report.iteration_residuals.push(res);
        consider(&mut best, res, &thetas, &weights);
    }

    let iterations = k + opts.replacement_sweeps;
    for it in 0..iterations {
        let r = prob.remainder(&thetas, &weights);
        let mut rng = substream(opts.seed, Purpose::Decoder, it as u64);
        thetas.push(prob.new_atom(&r, opts, &mut rng));
        weights.push(0.0);
        if thetas.len() > k {
            // hard thresholding on normalized atoms
            let columns: Vec<Vec<f64>> = thetas
                .iter()
                .map(|t| {
                    let a = prob.sketch_of(t);
                    let n = norm(&a).max(1e-300);
                    a.iter().map(|v| v / n).collect()
                })
                .collect();
            let beta = nnls(&columns, prob.s)?;
            let weakest = (0..beta.len()).min_by(|&a, &b| beta[a].total_cmp(&beta[b])).expect("non-empty");
            thetas.remove(weakest);
            weights.remove(weakest);
        }
        let res = refit(&mut thetas, &mut weights, &mut report)?;
        report.iteration_residuals.push(res);
        consider(&mut best, res, &thetas, &weights);
    }

    let (res, thetas, weights) = best.ok_or_else(|| Error::Numerical("decoder found no atom with positive weight".into()))?;
    report.residual = res;
    let atoms = thetas.iter().map(|t| Atom::from_params(family, t)).collect();
    let mixture = Mixture::new(family, atoms, weights)?.normalized()?;
    Ok((mixture, report))
}
