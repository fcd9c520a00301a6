//! Acceptance suite. Runs every criterion in sequence, prints one PASS/FAIL
//! line each and exits non-zero when any of them fails.
//!
//! Built without the libtest harness so the lines reach the terminal
//! regardless of output capture.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use clsketch::decoder::{atom_sketch_dirac, atom_sketch_gaussian, dirac_jvp, gaussian_jvp};
use clsketch::kernel::DEFAULT_REL_TOL;
use clsketch::landmarks::{leverage_scores, sample_uniform};
use clsketch::linalg::dot;
use clsketch::rng::{stream, Purpose};
use clsketch::sketch::{sketch_rows, CHUNK_ROWS};
use clsketch::tasks::{gen_synthetic, kmeans_risk, lloyd_baseline, Dataset, SyntheticSpec};
use clsketch::theory::{
    defect_pass_rate, effective_dimension, probe_directions, required_m_uniform, secant_directions, AmbientSpace,
    SeparatedDiracSampler,
};
use clsketch::{build_nystrom, build_rff, sketch_dataset, FeatureMap, GaussianKernel, Matrix, SymMatrix};
use clsketch_cli::pipeline::{MapKind, SamplingKind, SketchSize, TaskKind};
use clsketch_cli::sweep::{run_sweep, summarize, SummaryRow, SweepConfig};
use rand::Rng;

const SEED: u64 = 20_240_601;

type Outcome = (bool, String);

fn synthetic(k: usize, d: usize, n: usize, seed: u64) -> Dataset {
    gen_synthetic(&SyntheticSpec { k, d, n, separation: 2.0, seed }).expect("synthetic data")
}

fn gram_reproduction() -> Outcome {
    let kernel = GaussianKernel::new(81.0).unwrap();
    let mut worst = 0.0f64;
    let mut min_rank_gap = 0usize;
    for run in 0..20u64 {
        let data = synthetic(10, 10, 2000, SEED + run);
        for m in [10, 50, 200] {
            let set = sample_uniform(&data.rows, m, SEED + 100 * run + m as u64).unwrap();
            let pts = set.points.clone();
            let map = build_nystrom(set, kernel, DEFAULT_REL_TOL).unwrap();
            if let FeatureMap::Nystrom(ny) = &map {
                min_rank_gap = min_rank_gap.max(m - ny.rank());
            }
            let feats: Vec<Vec<f64>> = pts.iter_rows().map(|x| map.embed(x).unwrap()).collect();
            for i in 0..m {
                for j in 0..m {
                    let err = (dot(&feats[i], &feats[j]) - kernel.eval(pts.row(i), pts.row(j)).unwrap()).abs();
                    worst = worst.max(err);
                }
            }
        }
    }
    (worst <= 1e-8, format!("max |<phi,phi> - k| = {worst:.2e} (tol 1e-8), largest rank deficit {min_rank_gap}"))
}

fn rel_err(fd: &[f64], an: &[f64]) -> f64 {
    let diff = fd.iter().zip(an).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale = an.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / scale.max(1e-8)
}

/// Central differences of `θ ↦ ⟨f(θ), y⟩` with step 1e-6.
fn central_diff(theta: &[f64], y: &[f64], f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let h = 1e-6;
    (0..theta.len())
        .map(|j| {
            let mut p = theta.to_vec();
            let mut q = theta.to_vec();
            p[j] += h;
            q[j] -= h;
            (dot(&f(&p), y) - dot(&f(&q), y)) / (2.0 * h)
        })
        .collect()
}

fn gradient_correctness() -> Outcome {
    let d = 10;
    let data = synthetic(10, d, 2000, SEED);
    let set = sample_uniform(&data.rows, 50, SEED).unwrap();
    let maps = [
        ("nystrom", build_nystrom(set, GaussianKernel::new(81.0).unwrap(), DEFAULT_REL_TOL).unwrap()),
        ("rff", build_rff(d, 25, 81.0, SEED).unwrap()),
    ];
    let mut worst: Vec<String> = Vec::new();
    let mut ok = true;
    for (name, map) in &maps {
        let mut rng = stream(SEED, Purpose::Probe);
        let (mut e_dirac, mut e_mu, mut e_gamma) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..50 {
            let c: Vec<f64> = (0..d).map(|_| rng.gen_range(-8.0..8.0)).collect();
            let g: Vec<f64> = (0..d).map(|_| rng.gen_range(0.5..20.0)).collect();
            let y: Vec<f64> = (0..map.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();

            let an = dirac_jvp(map, &c, &y).unwrap();
            let fd = central_diff(&c, &y, |c| atom_sketch_dirac(map, c).unwrap());
            e_dirac = e_dirac.max(rel_err(&fd, &an));

            let (an_mu, an_gamma) = gaussian_jvp(map, &c, &g, &y).unwrap();
            let fd_mu = central_diff(&c, &y, |mu| atom_sketch_gaussian(map, mu, &g).unwrap());
            let fd_gamma = central_diff(&g, &y, |gamma| atom_sketch_gaussian(map, &c, gamma).unwrap());
            e_mu = e_mu.max(rel_err(&fd_mu, &an_mu));
            e_gamma = e_gamma.max(rel_err(&fd_gamma, &an_gamma));
        }
        ok &= e_dirac <= 1e-5 && e_mu <= 1e-5 && e_gamma <= 1e-5;
        worst.push(format!("{name}: dirac {e_dirac:.1e}, mean {e_mu:.1e}, variance {e_gamma:.1e}"));
    }
    (ok, format!("{} (tol 1e-5, 50 instances each)", worst.join("; ")))
}

fn dirac_limit() -> Outcome {
    let d = 10;
    let data = synthetic(10, d, 2000, SEED);
    let set = sample_uniform(&data.rows, 100, SEED).unwrap();
    let maps = [
        build_nystrom(set, GaussianKernel::new(81.0).unwrap(), DEFAULT_REL_TOL).unwrap(),
        build_rff(d, 50, 81.0, SEED).unwrap(),
    ];
    let mut rng = stream(SEED + 1, Purpose::Probe);
    let zero = vec![0.0; d];
    let mut worst = 0.0f64;
    for map in &maps {
        for _ in 0..100 {
            let mu: Vec<f64> = (0..d).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let a = atom_sketch_gaussian(map, &mu, &zero).unwrap();
            let b = atom_sketch_dirac(map, &mu).unwrap();
            worst = worst.max(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
    }
    (worst <= 1e-12, format!("max inf-norm gap {worst:.2e} over 100 means per map (tol 1e-12)"))
}

fn sketch_algebra() -> Outcome {
    let d = 10;
    let n = 6 * CHUNK_ROWS;
    let data = synthetic(10, d, n + 300, SEED);
    let set = sample_uniform(&data.rows, 80, SEED).unwrap();
    let maps = [
        build_nystrom(set, GaussianKernel::new(81.0).unwrap(), DEFAULT_REL_TOL).unwrap(),
        build_rff(d, 40, 81.0, SEED).unwrap(),
    ];
    let mut merge_ok = true;
    let mut perm_ok = true;
    for map in &maps {
        let whole = sketch_dataset(map, &data.rows).unwrap();
        for split in [CHUNK_ROWS, 3 * CHUNK_ROWS, n] {
            let head = sketch_rows(map, data.rows.iter_rows().take(split)).unwrap();
            let tail = sketch_rows(map, data.rows.iter_rows().skip(split)).unwrap();
            merge_ok &= head.merge(&tail).unwrap() == whole;
        }
        let order = [4usize, 0, 5, 2, 1, 3];
        let plain = sketch_rows(map, data.rows.iter_rows().take(n)).unwrap();
        let permuted = sketch_rows(
            map,
            order.iter().flat_map(|&c| (c * CHUNK_ROWS..(c + 1) * CHUNK_ROWS).map(|i| data.rows.row(i))),
        )
        .unwrap();
        perm_ok &= permuted == plain;
    }
    (merge_ok && perm_ok, format!("merge bit-exact: {merge_ok}, chunk permutation bit-identical: {perm_ok}"))
}

fn leverage_trace() -> Outcome {
    let mut rng = stream(SEED, Purpose::Theory);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let n = rng.gen_range(20..=200);
        let d = rng.gen_range(1..=8);
        let x = Matrix::from_fn(n, d, |_, _| rng.gen_range(-3.0..3.0));
        let kernel = GaussianKernel::new(rng.gen_range(0.5..10.0)).unwrap();
        let k: SymMatrix = kernel.gram_sym(&x);
        for lambda in [1e-3, 1e-1, 1.0] {
            let sum = leverage_scores(&k, lambda).unwrap().sum();
            let eff = effective_dimension(&k, lambda).unwrap();
            worst = worst.max((sum - eff).abs());
        }
    }
    (worst <= 1e-10, format!("max |sum of scores - eff_dim| = {worst:.2e} (tol 1e-10)"))
}

fn projection_bound(ambient: &AmbientSpace) -> Outcome {
    let lambda = 0.1 * ambient.sigma_max();
    let n_infty = ambient.n_infty(lambda).unwrap();
    let m_req = required_m_uniform(lambda, 0.1, n_infty, 1.0).unwrap().ceil() as usize;
    let m = m_req.min(ambient.n());
    let rate = defect_pass_rate(ambient, m, lambda, 50, SEED).unwrap();
    let passed = (rate * 50.0).round() as usize;
    (
        passed >= 45,
        format!("lambda {lambda:.3e}, N_inf {n_infty:.1}, m {m} (required {m_req}); defect <= 3 lambda in {passed}/50 trials (need 45)"),
    )
}

fn secant_sanity(ambient: &AmbientSpace, radius: f64) -> Outcome {
    let sampler = SeparatedDiracSampler { k: 10, d: 10, epsilon: 1.0, radius };
    let dirs = secant_directions(ambient, &sampler, 200, SEED).unwrap();
    let smax = ambient.sigma_max();
    let mut bound_ok = true;
    let mut monotone_ok = true;
    let mut worst_ratio = 0.0f64;
    let mut prev: Option<Vec<Option<f64>>> = None;
    let mut levels = 0;
    let mut lambda = 1e-4 * smax;
    while lambda <= 2.0 * smax {
        let probe = probe_directions(ambient, &dirs, lambda, None).unwrap();
        for v in probe.values.iter().flatten() {
            bound_ok &= *v <= 1.0 / lambda + 1e-8;
            worst_ratio = worst_ratio.max(v * lambda);
        }
        if let Some(p) = &prev {
            for (a, b) in p.iter().zip(&probe.values) {
                if let (Some(a), Some(b)) = (a, b) {
                    monotone_ok &= *b <= *a;
                }
            }
        }
        prev = Some(probe.values);
        levels += 1;
        lambda *= 2.0;
    }
    let used = dirs.iter().flatten().count();
    (
        bound_ok && monotone_ok,
        format!("{used} pairs, {levels} lambda levels doubling from 1e-4 sigma_max: max lambda*N = {worst_ratio:.6} (bound 1), monotone: {monotone_ok}"),
    )
}

fn median_of(summary: &[SummaryRow], family: MapKind, m_over_p: f64, sigma_sq: f64) -> f64 {
    summary
        .iter()
        .find(|s| s.family == family && s.m_over_p == m_over_p && s.sigma_sq == sigma_sq)
        .map_or(f64::NAN, |s| s.median_risk)
}

fn sweep(data: &Dataset, task: TaskKind, sizes: &[f64], sigma_sq: &[f64]) -> Vec<SummaryRow> {
    let cfg = SweepConfig {
        task,
        k: 10,
        series: vec![(MapKind::Nystrom, SamplingKind::Uniform), (MapKind::Rff, SamplingKind::Uniform)],
        sizes: sizes.iter().map(|&r| SketchSize::PerParameter(r)).collect(),
        sigma_sq: sigma_sq.to_vec(),
        lambda: 1e-3,
        trials: 20,
        seed: SEED,
    };
    summarize(&run_sweep(data, &cfg).expect("sweep"))
}

fn kmeans_ordering(data: &Dataset) -> Outcome {
    let summary = sweep(data, TaskKind::Kmeans, &[1.0, 2.0, 4.0], &[81.0]);
    let lloyd = lloyd_baseline(&data.rows, 10, 10, SEED).unwrap();
    let lloyd_risk = kmeans_risk(&data.rows, lloyd.centers(), 2).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for r in [1.0, 2.0] {
        let ny = median_of(&summary, MapKind::Nystrom, r, 81.0);
        let rff = median_of(&summary, MapKind::Rff, r, 81.0);
        ok &= ny <= rff;
        parts.push(format!("m/p {r}: nystrom {ny:.3} vs rff {rff:.3}"));
    }
    let ny4 = median_of(&summary, MapKind::Nystrom, 4.0, 81.0);
    ok &= ny4 <= 2.0 * lloyd_risk;
    parts.push(format!("m/p 4: nystrom {ny4:.3} vs 2 x lloyd {:.3}", 2.0 * lloyd_risk));
    (ok, format!("median SSE per point, {}", parts.join("; ")))
}

fn gmm_ordering(data: &Dataset) -> Outcome {
    let summary = sweep(data, TaskKind::Gmm, &[2.0], &[24.0]);
    let ny = median_of(&summary, MapKind::Nystrom, 2.0, 24.0);
    let rff = median_of(&summary, MapKind::Rff, 2.0, 24.0);
    (ny <= rff, format!("median NLL at m/p 2: nystrom {ny:.4} vs rff {rff:.4}"))
}

/// Log-σ² span of the grid values whose median is within 5% of the best.
fn good_span(medians: &[(f64, f64)]) -> (f64, Vec<f64>) {
    let best = medians.iter().map(|m| m.1).filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    let good: Vec<f64> = medians.iter().filter(|m| m.1 <= best + 0.05 * best.abs()).map(|m| m.0).collect();
    let lo = good.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = good.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ((hi / lo).ln(), good)
}

fn bandwidth_robustness(data: &Dataset) -> Outcome {
    let grid = [1.5, 3.0, 6.0, 12.0, 24.0, 48.0, 96.0];
    let summary = sweep(data, TaskKind::Gmm, &[2.0], &grid);
    let span = |family| {
        let medians: Vec<(f64, f64)> = grid.iter().map(|&s| (s, median_of(&summary, family, 2.0, s))).collect();
        good_span(&medians)
    };
    let (ny, ny_set) = span(MapKind::Nystrom);
    let (rff, rff_set) = span(MapKind::Rff);
    (ny >= rff, format!("log span nystrom {ny:.3} {ny_set:?} vs rff {rff:.3} {rff_set:?}"))
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    println!(
        "{} criterion {id:>2} {name}: {detail} [{:.1}s]",
        if ok { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    ok
}

fn main() -> ExitCode {
    // libtest-style filtering: `cargo test` passes the filter string, a run
    // that names another target's tests skips this one.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return ExitCode::SUCCESS;
    }

    let mut ok = true;
    ok &= run(1, "gram reproduction", gram_reproduction);
    ok &= run(2, "gradient correctness", gradient_correctness);
    ok &= run(3, "dirac limit", dirac_limit);
    ok &= run(4, "sketch algebra", sketch_algebra);
    ok &= run(5, "leverage trace identity", leverage_trace);

    let theory_data = synthetic(10, 10, 2000, SEED);
    let ambient = AmbientSpace::new(&theory_data.rows, &GaussianKernel::new(81.0).unwrap(), SEED);
    let radius = theory_data.rows.iter_rows().map(|r| dot(r, r).sqrt()).fold(0.0, f64::max);
    match ambient {
        Ok(ambient) => {
            ok &= run(6, "projection bound", || projection_bound(&ambient));
            ok &= run(10, "secant probe sanity", || secant_sanity(&ambient, radius));
        }
        Err(e) => {
            println!("FAIL criterion  6 projection bound: ambient space failed: {e}");
            println!("FAIL criterion 10 secant probe sanity: ambient space failed: {e}");
            ok = false;
        }
    }

    let data = synthetic(10, 10, 10_000, SEED);
    ok &= run(7, "compressive k-means ordering", || kmeans_ordering(&data));
    ok &= run(8, "compressive gaussian modeling ordering", || gmm_ordering(&data));
    ok &= run(9, "bandwidth robustness", || bandwidth_robustness(&data));

    if ok {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: at least one criterion failed");
        ExitCode::FAILURE
    }
}
