use serde::{Deserialize, Serialize};

use super::driver::DriverSpec;
use super::linear::{assemble, check_inputs, discrete_mild_residual, linear_range, IntervalReport, SolutionPair};
use super::oracle::backward_recursion_oracle;
use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::semigroup::{semigroup_gamma_bound, GammaBoundEstimate, SearchBudget, SemigroupOperator};
use crate::space::{norm_q, SpaceSpec};
use crate::stochastic::{time_l2_norm_levels, AdaptedProcess, RandomVector, StochasticModel};

/// Samples used to check the declared driver constants before iterating.
pub const DRIVER_CHECK_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardConfig {
    /// Interval length; rounded down to a whole number of steps.
    pub delta: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// The solver refuses to start when the guard is at or above this value.
    pub guard_threshold: f64,
    pub gamma_budget: SearchBudget,
    /// Seed of the gamma-bound search and the driver check.
    pub seed: u64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            delta: 0.125,
            tol: 1e-8,
            max_iter: 200,
            guard_threshold: 0.5,
            gamma_budget: SearchBudget::default(),
            seed: 0,
        }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(invalid("delta", format!("must be positive, got {}", self.delta)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(invalid("tol", format!("must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be positive"));
        }
        if !(self.guard_threshold > 0.0 && self.guard_threshold <= 1.0) {
            return Err(invalid("guard_threshold", format!("must lie in (0, 1], got {}", self.guard_threshold)));
        }
        Ok(())
    }
}

/// `theta = L delta g + L sqrt(delta) g (1 + sqrt(delta) g)` with `g` the
/// gamma bound of the semigroup; the implied constants are taken as one.
pub fn guard_theta(lipschitz: f64, delta: f64, gamma: f64) -> f64 {
    let r = delta.sqrt();
    lipschitz * delta * gamma + lipschitz * r * gamma * (1.0 + r * gamma)
}

/// Largest `delta` below `upper` with `theta < threshold`, by bisection.
pub fn suggest_delta(lipschitz: f64, gamma: f64, threshold: f64, upper: f64) -> f64 {
    if guard_theta(lipschitz, upper, gamma) < threshold {
        return upper;
    }
    let (mut lo, mut hi) = (0.0, upper);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if guard_theta(lipschitz, mid, gamma) < threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Interval layout and the contraction guard of a Picard run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuardReport {
    pub theta: f64,
    pub threshold: f64,
    pub lipschitz: f64,
    pub steps_per_interval: usize,
    /// `steps_per_interval * dt`.
    pub delta_effective: f64,
    pub gamma_bound: GammaBoundEstimate,
}

pub fn contraction_guard(
    model: &StochasticModel,
    s: &SemigroupOperator,
    driver: &DriverSpec,
    space: &SpaceSpec,
    cfg: &PicardConfig,
) -> Result<GuardReport> {
    cfg.validate()?;
    let grid = model.grid();
    if cfg.delta > grid.horizon() * (1.0 + 1e-12) {
        return Err(invalid("delta", format!("must not exceed the horizon {}, got {}", grid.horizon(), cfg.delta)));
    }
    let m = ((cfg.delta / grid.dt()) * (1.0 + 1e-12)).floor() as usize;
    if m == 0 {
        return Err(invalid("delta", format!("shorter than one time step ({})", grid.dt())));
    }
    let m = m.min(grid.steps());
    let gamma_bound = semigroup_gamma_bound(s, space, cfg.gamma_budget, cfg.seed)?;
    let delta_effective = m as f64 * grid.dt();
    let lipschitz = driver.lipschitz();
    Ok(GuardReport {
        theta: guard_theta(lipschitz, delta_effective, gamma_bound.value),
        threshold: cfg.guard_threshold,
        lipschitz,
        steps_per_interval: m,
        delta_effective,
        gamma_bound,
    })
}

/// Picard iteration from `(0, 0)` on intervals of length `delta`, patched
/// right to left.
pub fn solve_general_picard(
    model: &StochasticModel,
    s: &SemigroupOperator,
    driver: &DriverSpec,
    u_t: &RandomVector,
    space: &SpaceSpec,
    cfg: &PicardConfig,
) -> Result<SolutionPair> {
    solve_picard_from(model, s, driver, u_t, space, cfg, None)
}

/// As [`solve_general_picard`], starting every interval from the given
/// processes instead of zero.
pub fn solve_picard_from(
    model: &StochasticModel,
    s: &SemigroupOperator,
    driver: &DriverSpec,
    u_t: &RandomVector,
    space: &SpaceSpec,
    cfg: &PicardConfig,
    init: Option<(&AdaptedProcess, &AdaptedProcess)>,
) -> Result<SolutionPair> {
    check_inputs(model, s, driver, u_t, space)?;
    let guard = contraction_guard(model, s, driver, space, cfg)?;
    if guard.theta >= guard.threshold {
        return Err(Error::NonContraction {
            theta: guard.theta,
            threshold: guard.threshold,
            suggested_delta: suggest_delta(guard.lipschitz, guard.gamma_bound.value, guard.threshold, guard.delta_effective),
        });
    }
    driver.check_bounds(model, space, DRIVER_CHECK_SAMPLES, cfg.seed)?;
    let (n, d) = (model.steps(), driver.dim());
    if let Some((u0, v0)) = init {
        for p in [u0, v0] {
            p.check_model(model)?;
            if p.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, actual: p.dim() });
            }
        }
    }
    if driver.is_zero() && u_t.is_zero() {
        let (u, v) = (AdaptedProcess::zeros(model, d), AdaptedProcess::zeros(model, d));
        return Ok(SolutionPair {
            u,
            v,
            residual: 0.0,
            residual_by_time: vec![0.0; n + 1],
            iterations: 0,
            contraction_history: Vec::new(),
            intervals: Vec::new(),
        });
    }

    let m = guard.steps_per_interval;
    let mut u_levels: Vec<Vec<f64>> = (0..=n).map(|i| vec![0.0; model.states(i) * d]).collect();
    let mut v_levels: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; model.states(i) * d]).collect();
    u_levels[n] = u_t.values().to_vec();
    let mut intervals = Vec::new();
    let mut b = n;
    while b > 0 {
        let a = b.saturating_sub(m);
        let xi = u_levels[b].clone();
        let (mut u, mut v): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match init {
            Some((u0, v0)) => ((a..=b).map(|i| u0.level(i).to_vec()).collect(), (a..b).map(|i| v0.level(i).to_vec()).collect()),
            None => ((a..=b).map(|i| vec![0.0; model.states(i) * d]).collect(), (a..b).map(|i| vec![0.0; model.states(i) * d]).collect()),
        };
        let mut differences = Vec::new();
        let mut converged = false;
        for _ in 0..cfg.max_iter {
            let drift = driver.eval_levels(model, &u, &v, a, b);
            let (u_new, v_new) = linear_range(model, s, &drift, &xi, d, a, b);
            let du: Vec<Vec<f64>> = (a..b).map(|i| diff(&u_new[i - a], &u[i - a])).collect();
            let dv: Vec<Vec<f64>> = (a..b).map(|i| diff(&v_new[i - a], &v[i - a])).collect();
            let delta = time_l2_norm_levels(model, &du, a, d, space) + time_l2_norm_levels(model, &dv, a, d, space);
            differences.push(delta);
            u = u_new;
            v = v_new;
            if delta < cfg.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::MaxIterations {
                iterations: cfg.max_iter,
                last_difference: *differences.last().unwrap_or(&f64::NAN),
                theta: guard.theta,
            });
        }
        for i in a..b {
            u_levels[i] = std::mem::take(&mut u[i - a]);
            v_levels[i] = std::mem::take(&mut v[i - a]);
        }
        intervals.push(IntervalReport { from: a, to: b, iterations: differences.len(), differences });
        b = a;
    }
    let (u, v) = assemble(model, d, u_levels, v_levels);
    let res = discrete_mild_residual(model, s, driver, &u, &v, u_t, space)?;
    Ok(SolutionPair {
        u,
        v,
        residual: res.max,
        residual_by_time: res.by_time,
        iterations: intervals.iter().map(|r| r.iterations).sum(),
        contraction_history: intervals.iter().flat_map(|r| r.differences.iter().copied()).collect(),
        intervals,
    })
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Distance between two Picard fixed points reached from different starts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    /// Largest nodewise difference in `U`.
    pub distance_u: f64,
    /// Largest nodewise difference in `V`.
    pub distance_v: f64,
    pub distance: f64,
    pub iterations_from_zero: usize,
    pub iterations_from_perturbed: usize,
}

/// Adapted noise with unit state norm at every node.
pub fn unit_noise(model: &StochasticModel, dim: usize, q: f64, seed: u64) -> AdaptedProcess {
    let levels = (0..=model.steps())
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let mut out = vec![0.0; model.states(i) * dim];
            for chunk in out.chunks_mut(dim) {
                loop {
                    rng::fill_normal(&mut r, chunk);
                    let nrm = norm_q(chunk, q);
                    if nrm > 0.0 {
                        chunk.iter_mut().for_each(|x| *x /= nrm);
                        break;
                    }
                }
            }
            out
        })
        .collect();
    AdaptedProcess::from_levels(dim, levels)
}

/// Runs Picard from `(0, 0)` and from a perturbed reference solution (the
/// oracle on trees, the first run on paths) plus unit-norm adapted noise.
pub fn uniqueness_check(
    model: &StochasticModel,
    s: &SemigroupOperator,
    driver: &DriverSpec,
    u_t: &RandomVector,
    space: &SpaceSpec,
    cfg: &PicardConfig,
    seed: u64,
) -> Result<UniquenessReport> {
    let first = solve_general_picard(model, s, driver, u_t, space, cfg)?;
    let reference = if model.is_tree() {
        backward_recursion_oracle(model, s, driver, u_t, space)?
    } else {
        first.clone()
    };
    let d = driver.dim();
    let q = space.norm_exponent();
    let u0 = reference.u.axpy(1.0, &unit_noise(model, d, q, rng::derive_seed(seed, 1)))?;
    let v0 = reference.v.axpy(1.0, &unit_noise(model, d, q, rng::derive_seed(seed, 2)))?;
    let second = solve_picard_from(model, s, driver, u_t, space, cfg, Some((&u0, &v0)))?;
    let distance_u = first.u.max_abs_diff(&second.u)?;
    let distance_v = first.v.max_abs_diff(&second.v)?;
    Ok(UniquenessReport {
        distance_u,
        distance_v,
        distance: distance_u.max(distance_v),
        iterations_from_zero: first.iterations,
        iterations_from_perturbed: second.iterations,
    })
}
