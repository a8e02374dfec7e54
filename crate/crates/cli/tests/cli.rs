use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bsee(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsee")).args(args).env_remove("BSEE_OUT_DIR").output().expect("binary runs")
}

fn out_arg(dir: &Path) -> &str {
    dir.to_str().unwrap()
}

#[test]
fn solve_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsee(&["solve", "--config", "builtin:a0_wiener_linear", "--out", out_arg(dir.path()), "--dump-nodes"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let first: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!(first[1].abs() < 1e-12 && (first[2] - 5.0).abs() < 1e-12);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["residual"].as_f64().unwrap() <= 1e-10);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(dir.path().join("timings.json").exists());
    assert!(dir.path().join("nodes.csv").exists());
}

#[test]
fn repeated_solves_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = bsee(&["solve", "--config", "builtin:picard_sin", "--seed", "3", "--out", out_arg(d.path())]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["summary.csv", "manifest.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_bsee"))
        .args(["solve", "--config", "builtin:zero"])
        .env("BSEE_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("summary.csv").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let text = String::from_utf8(bsee(&["builtins", "a0_wiener_linear"]).stdout).unwrap();
    fs::write(&cfg, text.replace("norm_exponent = 2.0", "norm_exponent = 1.0")).unwrap();
    let o = bsee(&["solve", "--config", cfg.to_str().unwrap(), "--out", out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("space.norm_exponent"));
    assert_eq!(bsee(&["solve", "--config", "builtin:missing"]).status.code(), Some(2));
    assert_eq!(bsee(&["verify", "--suite", "nope"]).status.code(), Some(2));
    assert_eq!(bsee(&["bogus"]).status.code(), Some(2));
}

#[test]
fn non_contraction_exits_3_with_theta() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strong.toml");
    let text = String::from_utf8(bsee(&["builtins", "picard_sin"]).stdout).unwrap();
    fs::write(&cfg, text.replace("lipschitz = 0.8", "lipschitz = 8.0").replace("delta = 0.1", "delta = 0.5")).unwrap();
    let o = bsee(&["solve", "--config", cfg.to_str().unwrap(), "--out", out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("theta"));
}

#[test]
fn verify_suite_reports_json() {
    let o = bsee(&["verify", "--suite", "stochastic"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["passed"], true);
    let names: Vec<&str> = report["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"ito_isometry_defect"));
}

#[test]
fn convergence_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = bsee(&["convergence", "--config", "builtin:linear_drift_scalar", "--steps", "8,16,32", "--out", out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    for line in csv.lines().skip(2) {
        let order: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(order >= 0.4, "{line}");
    }
    let o = bsee(&["convergence", "--config", "builtin:zero", "--steps", "8", "--out", out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().next().unwrap(), "steps,error,residual");
    let o = bsee(&["convergence", "--config", "builtin:picard_sin", "--steps", "8,16", "--out", out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}
