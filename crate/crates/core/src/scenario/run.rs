use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{Scenario, ScenarioConfig, SolverKind};
use crate::error::{Error, Result};
use crate::semigroup::GammaBoundEstimate;
use crate::solvers::{
    backward_recursion_oracle, closed_form_error, contraction_guard, observed_order, solve_a0, solve_general_picard,
    solve_linear_drift, ClosedForm, DriverCheck, IntervalReport, SolutionPair, DRIVER_CHECK_SAMPLES,
};
use crate::stochastic::{mean_norm, ModelKind};

/// Outcome of a run relative to the residual tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    ResidualAboveTol,
    /// Path models: regression error dominates the residual, which is
    /// reported but not compared with the tolerance.
    Ungated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuardSummary {
    pub theta: f64,
    pub threshold: f64,
    pub lipschitz: f64,
    pub steps_per_interval: usize,
    pub delta_effective: f64,
    pub gamma_bound: GammaBoundEstimate,
    pub note: &'static str,
}

const GUARD_NOTE: &str = "implied constants of the convolution and stochastic-integral bounds taken as 1; \
for norm_exponent != 2 the gamma bound is a witness-search lower bound";

/// Everything reproducible about a run. Serialized byte-identically for
/// equal inputs; wall-clock timings live elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
    pub config: ScenarioConfig,
    pub seed: u64,
    pub model: ModelKind,
    pub steps: usize,
    pub path_count: Option<usize>,
    pub solver: SolverKind,
    pub tol: f64,
    pub residual: f64,
    pub status: RunStatus,
    pub iterations: usize,
    pub contraction_history: Vec<f64>,
    pub intervals: Vec<IntervalReport>,
    pub guard: Option<GuardSummary>,
    pub driver_check: Option<DriverCheck>,
    pub closed_form: Option<ClosedForm>,
    pub closed_form_error: Option<f64>,
    pub summary_sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Timings {
    pub build_seconds: f64,
    pub solve_seconds: f64,
    pub diagnostics_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub solution: SolutionPair,
    pub summary_csv: String,
    pub manifest_json: String,
    pub timings: Timings,
    pub nodes_csv: Option<String>,
}

impl RunOutput {
    pub fn timings_json(&self) -> String {
        serde_json::to_string_pretty(&self.timings).expect("timings serialize") + "\n"
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Solves the built scenario with its configured solver.
pub fn solve(sc: &Scenario) -> Result<SolutionPair> {
    let (model, space) = (&sc.model, &sc.space);
    let u_t = sc.terminal.terminal(model);
    match sc.solver {
        SolverKind::A0 => {
            let f = sc.driver.as_process(model).ok_or_else(|| Error::Config("solver.kind: a0 needs a fixed drift".into()))?;
            solve_a0(model, &f, &u_t, space)
        }
        SolverKind::Linear => {
            let f = sc.driver.as_process(model).ok_or_else(|| Error::Config("solver.kind: linear needs a fixed drift".into()))?;
            solve_linear_drift(model, &sc.semigroup, &f, &u_t, space)
        }
        SolverKind::Picard => solve_general_picard(model, &sc.semigroup, &sc.driver, &u_t, space, &sc.picard),
        SolverKind::Oracle => backward_recursion_oracle(model, &sc.semigroup, &sc.driver, &u_t, space),
    }
}

/// `t, E||U||, E||V||, residual_t`; `V` is undefined at the final time and
/// written as zero there.
pub fn summary_csv(sc: &Scenario, sol: &SolutionPair) -> Result<String> {
    let mut out = String::from("t,mean_norm_u,mean_norm_v,residual_t\n");
    for i in 0..=sc.model.steps() {
        let eu = mean_norm(&sc.model, &sol.u.slice(i), &sc.space)?.value;
        let ev = mean_norm(&sc.model, &sol.v.slice(i), &sc.space)?.value;
        let r = sol.residual_by_time.get(i).copied().unwrap_or(0.0);
        writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", sc.grid.time(i), eu, ev, r).unwrap();
    }
    Ok(out)
}

/// One row per `(level, node)`: time, Brownian value, `U` then `V`.
pub fn nodes_csv(sc: &Scenario, sol: &SolutionPair) -> String {
    let d = sc.space.dim();
    let mut out = String::from("level,node,t,w");
    for c in 0..d {
        write!(out, ",u{c}").unwrap();
    }
    for c in 0..d {
        write!(out, ",v{c}").unwrap();
    }
    out.push('\n');
    for i in 0..=sc.model.steps() {
        for node in 0..sc.model.states(i) {
            write!(out, "{i},{node},{:.16e},{:.16e}", sc.grid.time(i), sc.model.brownian(i, node)).unwrap();
            for x in sol.u.at(i, node).iter().chain(sol.v.at(i, node)) {
                write!(out, ",{x:.16e}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

/// Parses, validates and solves; `seed` overrides `model.seed`.
pub fn run_scenario(config_text: &str, seed: Option<u64>, dump_nodes: bool) -> Result<RunOutput> {
    let start = Instant::now();
    let mut config = ScenarioConfig::from_toml_str(config_text)?;
    if let Some(s) = seed {
        config = config.with_seed(s);
    }
    let sc = config.build()?;
    let build_seconds = start.elapsed().as_secs_f64();

    let t = Instant::now();
    let sol = solve(&sc)?;
    let solve_seconds = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (guard, driver_check) = if sc.solver == SolverKind::Picard {
        let g = contraction_guard(&sc.model, &sc.semigroup, &sc.driver, &sc.space, &sc.picard)?;
        let check = sc.driver.check_bounds(&sc.model, &sc.space, DRIVER_CHECK_SAMPLES, sc.picard.seed)?;
        let summary = GuardSummary {
            theta: g.theta,
            threshold: g.threshold,
            lipschitz: g.lipschitz,
            steps_per_interval: g.steps_per_interval,
            delta_effective: g.delta_effective,
            gamma_bound: g.gamma_bound,
            note: GUARD_NOTE,
        };
        (Some(summary), Some(check))
    } else {
        (None, None)
    };
    let closed_form_error = match &sc.closed_form {
        Some(cf) => Some(closed_form_error(&sc.model, &sc.semigroup, cf, &sol, &sc.space)?),
        None => None,
    };
    let summary = summary_csv(&sc, &sol)?;
    let nodes = dump_nodes.then(|| nodes_csv(&sc, &sol));
    let diagnostics_seconds = t.elapsed().as_secs_f64();

    let status = if !sc.model.is_tree() {
        RunStatus::Ungated
    } else if sol.residual <= sc.picard.tol {
        RunStatus::Converged
    } else {
        RunStatus::ResidualAboveTol
    };
    let canonical = sc.config.to_toml_string();
    let manifest = RunManifest {
        tool: "bsee",
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: sha256_hex(canonical.as_bytes()),
        config: sc.config.clone(),
        seed: sc.config.model.seed,
        model: sc.model.kind(),
        steps: sc.model.steps(),
        path_count: sc.model.path_count(),
        solver: sc.solver,
        tol: sc.picard.tol,
        residual: sol.residual,
        status,
        iterations: sol.iterations,
        contraction_history: sol.contraction_history.clone(),
        intervals: sol.intervals.clone(),
        guard,
        driver_check,
        closed_form: sc.closed_form.clone(),
        closed_form_error,
        summary_sha256: sha256_hex(summary.as_bytes()),
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    Ok(RunOutput {
        manifest,
        solution: sol,
        summary_csv: summary,
        manifest_json,
        timings: Timings { build_seconds, solve_seconds, diagnostics_seconds },
        nodes_csv: nodes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub steps: usize,
    pub error: f64,
    pub residual: f64,
    /// Against the previous row; absent on the first.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub closed_form: ClosedForm,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// With a single grid size there is nothing to compare, so the order
    /// column is left out.
    pub fn to_csv(&self) -> String {
        let with_order = self.rows.len() > 1;
        let mut out = String::from(if with_order { "steps,error,residual,order\n" } else { "steps,error,residual\n" });
        for r in &self.rows {
            write!(out, "{},{:.16e},{:.16e}", r.steps, r.error, r.residual).unwrap();
            if with_order {
                match r.order {
                    Some(o) => write!(out, ",{o:.6}").unwrap(),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Closed-form error of the scenario on each grid size, with observed
/// orders between consecutive sizes.
pub fn run_convergence(config_text: &str, steps: &[usize], seed: Option<u64>) -> Result<ConvergenceTable> {
    if steps.is_empty() {
        return Err(Error::Config("steps: need at least one grid size".into()));
    }
    let mut base = ScenarioConfig::from_toml_str(config_text)?;
    if let Some(s) = seed {
        base = base.with_seed(s);
    }
    let probe = base.build()?;
    let closed_form = probe
        .closed_form
        .clone()
        .ok_or_else(|| Error::Config("scenario has no closed-form solution; convergence needs one".into()))?;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(steps.len());
    for &n in steps {
        let sc = base.with_steps(n).build()?;
        let sol = solve(&sc)?;
        let error = closed_form_error(&sc.model, &sc.semigroup, &closed_form, &sol, &sc.space)?;
        let order = rows.last().map(|p| observed_order(p.steps, p.error, n, error));
        rows.push(ConvergenceRow { steps: n, error, residual: sol.residual, order });
    }
    Ok(ConvergenceTable { closed_form, rows })
}
