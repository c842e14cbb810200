use std::path::Path;
use std::process::{Command, Output};

use gks::model_io::write_model;
use gks::table::Table;
use gks_core::statespace::LtvModel;
use gks_core::{DMatrix, DVector};

fn gks(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gks")).args(args).output().expect("binary runs")
}

fn scalar_walk(dir: &Path, pi: f64) -> String {
    let one = DMatrix::from_element(1, 1, 1.0);
    let model = LtvModel::time_invariant(
        one.clone(),
        DMatrix::zeros(1, 1),
        one.clone(),
        one.clone(),
        one,
        DVector::zeros(1),
        DMatrix::from_element(1, 1, pi),
        vec![DVector::zeros(1); 3],
        vec![DVector::from_element(1, 1.0); 3],
    );
    let path = dir.join("walk.json");
    write_model(&path, &model).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn smooth_prints_the_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let model = scalar_walk(dir.path(), 1.0);
    let out = gks(&["smooth", "--model", &model]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x0"));
    assert_eq!(lines.count(), 4);

    let csv = dir.path().join("x.csv");
    let out = gks(&[
        "smooth", "--model", &model, "--solver", "fista", "--measurement-loss", "huber:kappa=1", "--bounds", "-0.5",
        "0.5", "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let x = Table::read_csv(&csv).unwrap().column("x0").unwrap();
    assert!(x.iter().all(|v| (-0.5..=0.5).contains(v)));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let model = scalar_walk(dir.path(), 1.0);
    let out = gks(&["smooth", "--model", &model, "--measurement-loss", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let out = gks(&["smooth", "--model", dir.path().join("none.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "horizon = 0\n").unwrap();
    let out = gks(&["bench", "rates", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(gks(&["bench", "nope", "--out", "x"]).status.code(), Some(2));
}

#[test]
fn solver_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    // A zero prior variance needs equality rows, which only the interior point handles.
    let model = scalar_walk(dir.path(), 0.0);
    let out = gks(&["smooth", "--model", &model, "--solver", "cp-v1", "--measurement-loss", "l1"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(gks(&["smooth", "--model", &model, "--measurement-loss", "l1"]).status.code(), Some(0));
}

#[test]
fn bench_writes_results_and_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = gks(&["bench", "constrained", "--out", out_dir.to_str().unwrap(), "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("rmse:"));
    let resolved = std::fs::read_to_string(out_dir.join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("seed = 3"));
    let table = Table::read_csv(&out_dir.join("constrained.csv")).unwrap();
    assert_eq!(table.rows.len(), 200);
}
