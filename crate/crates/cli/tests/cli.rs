use std::path::Path;
use std::process::{Command, Output};

fn star(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_star"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = star(dir, args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn pmf_sums_to_one_and_starts_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["pmf", "--mu", "0.5", "--sigma", "0.4", "--max-j", "60", "--out", "p.csv"]);
    let text = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("j,probability"));
    let rows: Vec<(u64, f64)> = lines
        .map(|l| {
            let (j, p) = l.split_once(',').unwrap();
            (j.parse().unwrap(), p.parse().unwrap())
        })
        .collect();
    assert_eq!(rows[0].0, 0);
    let total: f64 = rows.iter().map(|r| r.1).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn bounded_pmf_has_no_mass_above_bound() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["pmf", "--mu", "2", "--sigma", "1", "--bounded", "4", "--max-j", "8", "--out", "p.csv"]);
    let text = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    for l in text.lines().skip(1) {
        let (j, p) = l.split_once(',').unwrap();
        if j.parse::<u64>().unwrap() > 4 {
            assert_eq!(p.parse::<f64>().unwrap(), 0.0);
        }
    }
}

#[test]
fn fit_then_waic_reports_finite_criterion() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--n", "60", "--seed", "1", "--out", "d.csv"]);
    ok(
        dir.path(),
        &["fit", "--data", "d.csv", "--burn-in", "50", "--saved", "80", "--seed", "2", "--out", "f.json"],
    );
    assert!(dir.path().join("f.bin").exists());
    let out = ok(dir.path(), &["waic", "f.json"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v["waic"].as_f64().unwrap().is_finite());
}

#[test]
fn missing_response_column_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d.csv"), "a,b\n1,2\n3,4\n").unwrap();
    let out = star(dir.path(), &["fit", "--data", "d.csv", "--out", "f.json"]);
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    assert!(!dir.path().join("f.json").exists());
}

#[test]
fn negative_counts_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d.csv"), "y,x1\n1,0.2\n-3,0.5\n2,0.9\n").unwrap();
    let out = star(dir.path(), &["fit", "--data", "d.csv"]);
    assert!(!out.status.success());
}

#[test]
fn unknown_nonlinear_predictor_fails() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--n", "30", "--seed", "1", "--out", "d.csv"]);
    let out = star(dir.path(), &["fit", "--data", "d.csv", "--nonlinear", "nope"]);
    assert!(!out.status.success());
}
