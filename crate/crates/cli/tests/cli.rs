use std::fs;
use std::path::Path;
use std::process::Command as Process;

use clap::Parser;
use clsketch::tasks::{kmeans_risk, load_dataset, lloyd_baseline, Hypothesis};
use clsketch_cli::commands::{run, Cli};
use clsketch_cli::CliError;

fn cli(args: &[&str]) -> Result<String, CliError> {
    let parsed = Cli::try_parse_from(std::iter::once("clsketch").chain(args.iter().copied()))
        .map_err(|e| CliError::Argument(e.to_string()))?;
    run(parsed)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen(dir: &Path, name: &str, seed: &str) -> std::path::PathBuf {
    let out = dir.join(name);
    cli(&["gen", "--n", "600", "--k", "3", "--d", "2", "--seed", seed, "--out", p(&out)]).unwrap();
    out
}

#[test]
fn gen_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a.clds", "4");
    let b = gen(dir.path(), "b.clds", "4");
    let c = gen(dir.path(), "c.clds", "5");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn zero_dimension_is_an_argument_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.clds");
    let err = cli(&["gen", "--n", "10", "--d", "0", "--out", p(&out)]).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn sketch_learn_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "data.clds", "1");
    let sketch = dir.path().join("s.clsk");
    let hyp = dir.path().join("h.txt");
    cli(&["sketch", "--data", p(&data), "--k", "3", "--m", "40", "--sigma-sq", "4", "--out", p(&sketch)]).unwrap();
    cli(&["learn", "--sketch", p(&sketch), "--k", "3", "--out", p(&hyp)]).unwrap();
    let h = Hypothesis::from_table(&fs::read_to_string(&hyp).unwrap()).unwrap();
    assert_eq!(h.k(), 3);
    assert_eq!(h.dim(), 2);

    let report = cli(&["eval", "--data", p(&data), "--hypothesis", p(&hyp), "--ari", "--baseline-restarts", "5"]).unwrap();
    let row: Vec<&str> = report.lines().last().unwrap().split(',').collect();
    assert_eq!(row[0], "kmeans");
    let risk: f64 = row[2].parse().unwrap();
    let ari: f64 = row[3].parse().unwrap();
    let baseline: f64 = row[4].parse().unwrap();

    let ds = load_dataset(&data).unwrap();
    assert!((risk - kmeans_risk(&ds.rows, h.centers(), 2).unwrap()).abs() <= 1e-12 * risk.max(1.0));
    let lloyd = lloyd_baseline(&ds.rows, 3, 5, 0).unwrap();
    assert!((baseline - kmeans_risk(&ds.rows, lloyd.centers(), 2).unwrap()).abs() <= 1e-12 * baseline.max(1.0));
    assert!(ari > 0.5, "well separated clusters should be recovered, ari {ari}");
    assert!(risk <= 2.0 * baseline, "risk {risk} vs baseline {baseline}");
}

#[test]
fn malformed_hypothesis_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "data.clds", "1");
    let hyp = dir.path().join("h.txt");
    fs::write(&hyp, "task kmeans k 2 d 2\n1.0 oops\n").unwrap();
    let err = cli(&["eval", "--data", p(&data), "--hypothesis", p(&hyp)]).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn sweep_writes_csv_summary_and_chart() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    cli(&[
        "sweep", "--n", "400", "--d", "2", "--k", "2", "--m-over-p", "2,4", "--sigma-sq", "4", "--trials", "2", "--out",
        p(&out),
    ])
    .unwrap();
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "family,sampling,m,m_over_p,sigma_sq,trial,risk,ari,wall_time");
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
    assert_eq!(fs::read_to_string(out.join("summary.csv")).unwrap().lines().count(), 1 + 2 * 2);
    assert!(fs::read_to_string(out.join("sweep.svg")).unwrap().contains("<svg"));
}

#[test]
fn theory_reports_one_row_per_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "data.clds", "2");
    let out = dir.path().join("theory.csv");
    cli(&[
        "theory", "--data", p(&data), "--sigma-sq", "4", "--lambda", "0.01,0.1", "--trials", "3", "--probe-trials", "5",
        "--k", "2", "--out", p(&out),
    ])
    .unwrap();
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("lambda,n,subsampled,eff_dim"));
    let cols = lines[0].split(',').count();
    assert!(lines[1..].iter().all(|l| l.split(',').count() == cols));
}

#[test]
fn binary_maps_errors_to_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_clsketch");
    let dir = tempfile::tempdir().unwrap();
    let status = Process::new(bin).args(["gen", "--d", "0", "--out"]).arg(dir.path().join("x")).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let missing = dir.path().join("missing.clsk");
    let status = Process::new(bin)
        .args(["learn", "--sketch"])
        .arg(&missing)
        .arg("--out")
        .arg(dir.path().join("h.txt"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}
