use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::semigroup::{Generator, SearchBudget, SemigroupOperator};
use crate::solvers::{ClosedForm, DriverSpec, PicardConfig, ProcessSpec};
use crate::space::SpaceSpec;
use crate::stochastic::{ModelKind, StochasticModel};

/// A run configuration: flat `key = value` pairs in named sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub space: SpaceSection,
    pub time: TimeSection,
    pub model: ModelSection,
    pub generator: GeneratorSection,
    pub driver: DriverSection,
    pub terminal: TerminalSection,
    pub solver: SolverSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSection {
    pub dim: usize,
    pub norm_exponent: f64,
    pub moment_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_count: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Zero,
    Diag,
    Rotation,
    TridiagLaplacian,
    Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    pub kind: GeneratorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    Zero,
    Constant,
    WienerLinear,
    WienerSquare,
    Time,
    CallLike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverKind {
    Zero,
    Constant,
    WienerLinear,
    WienerSquare,
    Time,
    CallLike,
    Affine,
    SinU,
    TanhUv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverSection {
    pub kind: DriverKind,
    /// Direction vector of the process kinds and of the affine offset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strike: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_coeff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_coeff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<ProcessKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalSection {
    pub kind: ProcessKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strike: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    A0,
    Linear,
    Picard,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub kind: SolverKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_candidates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_samples: Option<usize>,
}

fn default_tol() -> f64 {
    1e-8
}

fn cfg_err(field: &str, reason: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {reason}"))
}

/// Rejects keys that the chosen kind does not read.
fn forbid<T>(field: &str, kind: &str, value: &Option<T>) -> Result<()> {
    if value.is_some() {
        return Err(cfg_err(field, format!("not used by kind `{kind}`")));
    }
    Ok(())
}

fn require<'a, T>(field: &str, kind: &str, value: &'a Option<T>) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| cfg_err(field, format!("required by kind `{kind}`")))
}

fn finite(field: &str, v: f64) -> Result<f64> {
    if !v.is_finite() {
        return Err(cfg_err(field, format!("must be finite, got {v}")));
    }
    Ok(v)
}

fn vector(field: &str, x: &[f64], dim: usize) -> Result<Vec<f64>> {
    if x.len() != dim {
        return Err(cfg_err(field, format!("expected {dim} entries, got {}", x.len())));
    }
    for v in x {
        finite(field, *v)?;
    }
    Ok(x.to_vec())
}

fn kind_name<T: Serialize>(k: &T) -> String {
    serde_json::to_value(k).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

fn process(
    section: &str,
    kind: ProcessKind,
    x: &Option<Vec<f64>>,
    strike: &Option<f64>,
    dim: usize,
) -> Result<ProcessSpec> {
    let name = kind_name(&kind);
    let xf = format!("{section}.x");
    let sf = format!("{section}.strike");
    if kind != ProcessKind::CallLike {
        forbid(&sf, &name, strike)?;
    }
    Ok(match kind {
        ProcessKind::Zero => {
            forbid(&xf, &name, x)?;
            ProcessSpec::Zero { dim }
        }
        ProcessKind::Constant => ProcessSpec::Constant { x: vector(&xf, require(&xf, &name, x)?, dim)? },
        ProcessKind::WienerLinear => ProcessSpec::WienerLinear { x: vector(&xf, require(&xf, &name, x)?, dim)? },
        ProcessKind::WienerSquare => ProcessSpec::WienerSquare { x: vector(&xf, require(&xf, &name, x)?, dim)? },
        ProcessKind::Time => ProcessSpec::Time { x: vector(&xf, require(&xf, &name, x)?, dim)? },
        ProcessKind::CallLike => ProcessSpec::CallLike {
            strike: finite(&sf, *require(&sf, &name, strike)?)?,
            x: vector(&xf, require(&xf, &name, x)?, dim)?,
        },
    })
}

/// A validated configuration with every domain object built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub space: SpaceSpec,
    pub grid: TimeGrid,
    pub model: StochasticModel,
    pub generator: Generator,
    pub semigroup: SemigroupOperator,
    pub driver: DriverSpec,
    pub terminal: ProcessSpec,
    pub solver: SolverKind,
    pub picard: PicardConfig,
    pub closed_form: Option<ClosedForm>,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().trim().to_owned() + &span_hint(text, e.span())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Same scenario on another grid size.
    pub fn with_steps(&self, steps: usize) -> Self {
        let mut c = self.clone();
        c.time.steps = steps;
        c
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.model.seed = seed;
        c
    }

    /// Validates every field (before any computation) and builds the scenario.
    pub fn build(&self) -> Result<Scenario> {
        let s = &self.space;
        let space = SpaceSpec::new(s.dim, s.norm_exponent, s.moment_exponent).map_err(|e| match e {
            Error::InvalidParameter { field, reason } => cfg_err(&format!("space.{field}"), reason),
            other => other,
        })?;
        let dim = s.dim;
        let t = &self.time;
        if !(t.horizon.is_finite() && t.horizon > 0.0) {
            return Err(cfg_err("time.horizon", format!("must be positive and finite, got {}", t.horizon)));
        }
        if t.steps == 0 {
            return Err(cfg_err("time.steps", "must be positive"));
        }
        let grid = TimeGrid::new(t.horizon, t.steps)?;

        let m = &self.model;
        let model = match m.kind {
            ModelKind::Tree => {
                forbid("model.path_count", "tree", &m.path_count)?;
                if t.steps > crate::stochastic::MAX_TREE_DEPTH {
                    return Err(cfg_err(
                        "time.steps",
                        format!("tree depth {} exceeds {}", t.steps, crate::stochastic::MAX_TREE_DEPTH),
                    ));
                }
                StochasticModel::tree(grid)?
            }
            ModelKind::Paths => {
                let count = *require("model.path_count", "paths", &m.path_count)?;
                if !(2..=1_000_000).contains(&count) {
                    return Err(cfg_err("model.path_count", format!("must lie in 2..=1000000, got {count}")));
                }
                StochasticModel::paths(grid, count, m.seed)?
            }
        };

        let g = &self.generator;
        let gname = kind_name(&g.kind);
        let used = |f: &str| {
            matches!(
                (g.kind, f),
                (GeneratorKind::Diag, "values")
                    | (GeneratorKind::Rotation, "omega")
                    | (GeneratorKind::TridiagLaplacian, "scale")
                    | (GeneratorKind::Matrix, "entries")
            )
        };
        for (f, present) in [
            ("values", g.values.is_some()),
            ("omega", g.omega.is_some()),
            ("scale", g.scale.is_some()),
            ("entries", g.entries.is_some()),
        ] {
            if present && !used(f) {
                return Err(cfg_err(&format!("generator.{f}"), format!("not used by kind `{gname}`")));
            }
        }
        let generator = match g.kind {
            GeneratorKind::Zero => Generator::Zero { dim },
            GeneratorKind::Diag => Generator::Diagonal { values: vector("generator.values", require("generator.values", &gname, &g.values)?, dim)? },
            GeneratorKind::Rotation => {
                if dim < 2 {
                    return Err(cfg_err("generator.kind", "rotation needs space.dim >= 2"));
                }
                Generator::Rotation { dim, omega: finite("generator.omega", *require("generator.omega", &gname, &g.omega)?)? }
            }
            GeneratorKind::TridiagLaplacian => Generator::TridiagLaplacian {
                dim,
                scale: finite("generator.scale", *require("generator.scale", &gname, &g.scale)?)?,
            },
            GeneratorKind::Matrix => {
                let e = require("generator.entries", &gname, &g.entries)?;
                Generator::Matrix { dim, entries: vector("generator.entries", e, dim * dim)? }
            }
        };
        let semigroup = SemigroupOperator::new(generator.matrix()?, grid)?;

        let d = &self.driver;
        let dname = kind_name(&d.kind);
        let driver = match d.kind {
            DriverKind::Affine => {
                forbid("driver.lipschitz", &dname, &d.lipschitz)?;
                let offset_kind = d.offset.unwrap_or(ProcessKind::Zero);
                let offset = process("driver", offset_kind, &d.x, &d.strike, dim)?;
                DriverSpec::Affine {
                    u_coeff: finite("driver.u_coeff", d.u_coeff.unwrap_or(0.0))?,
                    v_coeff: finite("driver.v_coeff", d.v_coeff.unwrap_or(0.0))?,
                    offset,
                }
            }
            DriverKind::SinU | DriverKind::TanhUv => {
                for (f, v) in [("driver.x", d.x.is_some()), ("driver.strike", d.strike.is_some())] {
                    if v {
                        return Err(cfg_err(f, format!("not used by kind `{dname}`")));
                    }
                }
                forbid("driver.u_coeff", &dname, &d.u_coeff)?;
                forbid("driver.v_coeff", &dname, &d.v_coeff)?;
                forbid("driver.offset", &dname, &d.offset)?;
                let l = finite("driver.lipschitz", *require("driver.lipschitz", &dname, &d.lipschitz)?)?;
                if l < 0.0 {
                    return Err(cfg_err("driver.lipschitz", format!("must be non-negative, got {l}")));
                }
                if d.kind == DriverKind::SinU {
                    DriverSpec::SinU { lipschitz: l, dim }
                } else {
                    DriverSpec::TanhUv { lipschitz: l, dim }
                }
            }
            other => {
                forbid("driver.u_coeff", &dname, &d.u_coeff)?;
                forbid("driver.v_coeff", &dname, &d.v_coeff)?;
                forbid("driver.offset", &dname, &d.offset)?;
                forbid("driver.lipschitz", &dname, &d.lipschitz)?;
                let pk = match other {
                    DriverKind::Zero => ProcessKind::Zero,
                    DriverKind::Constant => ProcessKind::Constant,
                    DriverKind::WienerLinear => ProcessKind::WienerLinear,
                    DriverKind::WienerSquare => ProcessKind::WienerSquare,
                    DriverKind::Time => ProcessKind::Time,
                    _ => ProcessKind::CallLike,
                };
                match process("driver", pk, &d.x, &d.strike, dim)? {
                    ProcessSpec::Zero { dim } => DriverSpec::Zero { dim },
                    ProcessSpec::Constant { x } => DriverSpec::Constant { c: x },
                    p => DriverSpec::TimeProcess { process: p },
                }
            }
        };
        let tm = &self.terminal;
        let terminal = process("terminal", tm.kind, &tm.x, &tm.strike, dim)?;

        let sv = &self.solver;
        let sname = kind_name(&sv.kind);
        if !(sv.tol.is_finite() && sv.tol > 0.0) {
            return Err(cfg_err("solver.tol", format!("must be positive, got {}", sv.tol)));
        }
        if sv.kind != SolverKind::Picard {
            forbid("solver.delta", &sname, &sv.delta)?;
            forbid("solver.max_iter", &sname, &sv.max_iter)?;
            forbid("solver.guard_threshold", &sname, &sv.guard_threshold)?;
        }
        let defaults = PicardConfig::default();
        let budget = SearchBudget {
            candidates: sv.gamma_candidates.unwrap_or(defaults.gamma_budget.candidates),
            samples: sv.gamma_samples.unwrap_or(defaults.gamma_budget.samples),
            ..defaults.gamma_budget
        };
        let picard = PicardConfig {
            delta: sv.delta.unwrap_or(defaults.delta.min(t.horizon).max(grid.dt())),
            tol: sv.tol,
            max_iter: sv.max_iter.unwrap_or(defaults.max_iter),
            guard_threshold: sv.guard_threshold.unwrap_or(defaults.guard_threshold),
            gamma_budget: budget,
            seed: m.seed,
        };
        if sv.kind == SolverKind::Picard {
            picard.validate().map_err(|e| match e {
                Error::InvalidParameter { field, reason } => cfg_err(&format!("solver.{field}"), reason),
                other => other,
            })?;
            if picard.delta > t.horizon {
                return Err(cfg_err("solver.delta", format!("must not exceed time.horizon = {}", t.horizon)));
            }
            if picard.delta < grid.dt() * (1.0 - 1e-12) {
                return Err(cfg_err("solver.delta", format!("shorter than one time step ({})", grid.dt())));
            }
        }
        match sv.kind {
            SolverKind::A0 | SolverKind::Linear if driver.depends_on_solution() => {
                return Err(cfg_err("solver.kind", format!("`{sname}` needs a driver that does not depend on (U, V)")));
            }
            SolverKind::A0 if g.kind != GeneratorKind::Zero => {
                return Err(cfg_err("solver.kind", "`a0` needs generator.kind = \"zero\""));
            }
            SolverKind::Oracle if m.kind != ModelKind::Tree => {
                return Err(cfg_err("solver.kind", "`oracle` needs model.kind = \"tree\""));
            }
            _ => {}
        }
        let closed_form = detect_closed_form(&generator, &driver, &terminal);
        Ok(Scenario {
            config: self.clone(),
            space,
            grid,
            model,
            generator,
            semigroup,
            driver,
            terminal,
            solver: sv.kind,
            picard,
            closed_form,
        })
    }
}

fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => {
            let line = text[..r.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}

/// The closed-form solution of the instance, when the catalog has one.
pub fn detect_closed_form(generator: &Generator, driver: &DriverSpec, terminal: &ProcessSpec) -> Option<ClosedForm> {
    let zero_gen = matches!(generator, Generator::Zero { .. });
    match (driver, terminal) {
        (DriverSpec::Zero { dim }, ProcessSpec::Zero { .. }) => Some(ClosedForm::DeterministicFlow { x: vec![0.0; *dim] }),
        (DriverSpec::Zero { .. }, ProcessSpec::Constant { x }) => Some(ClosedForm::DeterministicFlow { x: x.clone() }),
        (DriverSpec::Zero { .. }, ProcessSpec::WienerLinear { x }) => Some(ClosedForm::WienerFlow { x: x.clone() }),
        (DriverSpec::Constant { c }, ProcessSpec::Constant { x }) if zero_gen => {
            Some(ClosedForm::ConstantDrift { terminal: x.clone(), drift: c.clone() })
        }
        (DriverSpec::Constant { c }, ProcessSpec::Zero { dim }) if zero_gen => {
            Some(ClosedForm::ConstantDrift { terminal: vec![0.0; *dim], drift: c.clone() })
        }
        (DriverSpec::TimeProcess { process: ProcessSpec::WienerLinear { x } }, ProcessSpec::Zero { .. }) => match generator {
            Generator::Diagonal { values } => Some(ClosedForm::DiagonalWienerDrift { rates: values.clone(), x: x.clone() }),
            Generator::Zero { dim } => Some(ClosedForm::DiagonalWienerDrift { rates: vec![0.0; *dim], x: x.clone() }),
            _ => None,
        },
        (DriverSpec::Affine { u_coeff, v_coeff, offset }, ProcessSpec::Constant { x }) if *v_coeff == 0.0 && offset.is_zero() => {
            Some(ClosedForm::ExponentialDecay { rate: *u_coeff, x: x.clone() })
        }
        _ => None,
    }
}
