use super::*;
use crate::error::Error;

fn text(name: &str) -> &'static str {
    builtin(name).unwrap()
}

#[test]
fn every_builtin_parses_and_round_trips() {
    for name in builtin_names() {
        let c = ScenarioConfig::from_toml_str(text(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        c.build().unwrap_or_else(|e| panic!("{name}: {e}"));
        let again = ScenarioConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, again, "{name}");
    }
}

#[test]
fn a0_wiener_linear_first_row() {
    let out = run_scenario(text("a0_wiener_linear"), None, false).unwrap();
    let row: Vec<f64> = out.summary_csv.lines().nth(1).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(row[0], 0.0);
    assert!(row[1].abs() <= 1e-12);
    assert!((row[2] - 5.0).abs() <= 1e-12);
    assert!(out.manifest.residual <= 1e-10);
    assert_eq!(out.manifest.status, RunStatus::Converged);
}

#[test]
fn field_level_errors() {
    let bad = text("a0_wiener_linear").replace("norm_exponent = 2.0", "norm_exponent = 1.0");
    match ScenarioConfig::from_toml_str(&bad).unwrap().build() {
        Err(Error::Config(m)) => assert!(m.contains("space.norm_exponent"), "{m}"),
        other => panic!("{other:?}"),
    }
    let unknown = text("zero").replace("[time]", "[time]\nfoo = 1");
    match ScenarioConfig::from_toml_str(&unknown) {
        Err(Error::Config(m)) => assert!(m.contains("foo"), "{m}"),
        other => panic!("{other:?}"),
    }
    let stray = text("zero").replace("kind = \"rotation\"", "kind = \"rotation\"\nscale = 2.0");
    match ScenarioConfig::from_toml_str(&stray).unwrap().build() {
        Err(Error::Config(m)) => assert!(m.contains("generator.scale"), "{m}"),
        other => panic!("{other:?}"),
    }
    let short = text("linear_flow").replace("x = [1.0, 0.0, -1.0]", "x = [1.0]");
    assert!(matches!(ScenarioConfig::from_toml_str(&short).unwrap().build(), Err(Error::Config(_))));
    let wide = text("picard_sin").replace("delta = 0.1", "delta = 2.0");
    assert!(matches!(ScenarioConfig::from_toml_str(&wide).unwrap().build(), Err(Error::Config(_))));
    let deep = text("zero").replace("steps = 8", "steps = 25");
    assert!(matches!(ScenarioConfig::from_toml_str(&deep).unwrap().build(), Err(Error::Config(_))));
}

#[test]
fn tree_runs_are_byte_identical() {
    for name in ["picard_tanh_lq", "linear_drift_scalar_tree", "linear_drift_scalar"] {
        let a = run_scenario(text(name), Some(5), true).unwrap();
        let b = run_scenario(text(name), Some(5), true).unwrap();
        assert_eq!(a.summary_csv, b.summary_csv);
        assert_eq!(a.manifest_json, b.manifest_json);
        assert_eq!(a.nodes_csv, b.nodes_csv);
    }
}

#[test]
fn closed_form_detection() {
    let sc = ScenarioConfig::from_toml_str(text("picard_decay_aU")).unwrap().build().unwrap();
    assert!(matches!(sc.closed_form, Some(crate::solvers::ClosedForm::ExponentialDecay { .. })));
    let sc = ScenarioConfig::from_toml_str(text("picard_sin")).unwrap().build().unwrap();
    assert!(sc.closed_form.is_none());
    assert!(matches!(run_convergence(text("picard_sin"), &[8], None), Err(Error::Config(_))));
}

#[test]
fn convergence_tables() {
    let t = run_convergence(text("linear_drift_scalar"), &[8, 16, 32], None).unwrap();
    for r in &t.rows[1..] {
        assert!(r.order.unwrap() >= 0.4, "{r:?}");
    }
    eprintln!("{}", t.to_csv());
    let z = run_convergence(text("zero"), &[4, 8], None).unwrap();
    assert!(z.rows.iter().all(|r| r.error == 0.0));
    let single = run_convergence(text("zero"), &[4], None).unwrap();
    assert_eq!(single.to_csv().lines().next().unwrap(), "steps,error,residual");
    let d = run_convergence(text("picard_decay_aU"), &[8, 16], None).unwrap();
    assert!(d.rows[1].error < d.rows[0].error);
}

#[test]
fn every_tree_builtin_meets_its_tolerance() {
    for name in builtin_names() {
        let out = run_scenario(text(name), None, false).unwrap_or_else(|e| panic!("{name}: {e}"));
        if out.manifest.status != RunStatus::Ungated {
            assert_eq!(out.manifest.status, RunStatus::Converged, "{name}: residual {}", out.manifest.residual);
        }
    }
}
