use rayon::prelude::*;
use serde::Serialize;

use super::driver::DriverSpec;
use crate::error::{Error, Result};
use crate::representation::represent_values;
use crate::semigroup::SemigroupOperator;
use crate::space::{norm_q, SpaceSpec};
use crate::stochastic::{AdaptedProcess, RandomVector, StochasticModel};

/// Iterations and successive differences on one Picard interval
/// `[t_from, t_to]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalReport {
    pub from: usize,
    pub to: usize,
    pub iterations: usize,
    pub differences: Vec<f64>,
}

impl IntervalReport {
    /// `d_n / d_{n-1}` for iterations `n >= first` (1-based); pairs with a
    /// vanishing denominator are skipped.
    pub fn ratios_from(&self, first: usize) -> Vec<f64> {
        (first.max(2)..=self.differences.len())
            .filter(|&n| self.differences[n - 2] > 0.0)
            .map(|n| self.differences[n - 1] / self.differences[n - 2])
            .collect()
    }
}

/// `(U, V)` with the defect of the discrete mild equation.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPair {
    pub u: AdaptedProcess,
    /// `V` on levels `0..N`; the slot at level `N` is zero.
    pub v: AdaptedProcess,
    /// `max_i` of [`Self::residual_by_time`].
    pub residual: f64,
    /// `L^p` norm of the mild-equation defect at each `t_i`.
    pub residual_by_time: Vec<f64>,
    pub iterations: usize,
    /// All successive differences, interval after interval.
    pub contraction_history: Vec<f64>,
    pub intervals: Vec<IntervalReport>,
}

/// Defect of the discrete mild equation at every grid time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub by_time: Vec<f64>,
    pub max: f64,
}

fn check_common(
    model: &StochasticModel,
    s: &SemigroupOperator,
    u_t: &RandomVector,
    dim: usize,
    space: &SpaceSpec,
) -> Result<()> {
    if s.grid() != model.grid() {
        return Err(Error::ModelMismatch("semigroup and model use different grids".into()));
    }
    if s.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, actual: s.dim() });
    }
    if u_t.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, actual: u_t.dim() });
    }
    space.check_len(dim)?;
    if u_t.level() != model.steps() || u_t.values().len() != model.states(model.steps()) * dim {
        return Err(Error::ModelMismatch("terminal value must be a level-N vector of this model".into()));
    }
    Ok(())
}

/// `D_i = U_i + sum_{j>=i} S(t_j - t_i) (f_j dt + V_j dW_{j+1}) - S(T - t_i) u_T`
/// with the drift values `f_j` given; each sum is evaluated directly along
/// every terminal state.
pub fn mild_residual_for_drift(
    model: &StochasticModel,
    s: &SemigroupOperator,
    u: &AdaptedProcess,
    v: &AdaptedProcess,
    drift: &[Vec<f64>],
    u_t: &RandomVector,
    space: &SpaceSpec,
) -> Result<ResidualReport> {
    let d = u.dim();
    check_common(model, s, u_t, d, space)?;
    u.check_model(model)?;
    v.check_model(model)?;
    let n = model.steps();
    if drift.len() < n {
        return Err(Error::ShapeMismatch(format!("drift needs {n} levels, got {}", drift.len())));
    }
    let (p, q, dt) = (space.moment_exponent(), space.norm_exponent(), model.grid().dt());
    let per_leaf: Vec<Vec<f64>> = (0..model.states(n))
        .into_par_iter()
        .map(|leaf| {
            let mut z = vec![0.0; n * d];
            for j in 0..n {
                let node = model.ancestor(leaf, n, j);
                let dw = model.increment(j, model.ancestor(leaf, n, j + 1));
                let (f, vv) = (&drift[j][node * d..(node + 1) * d], v.at(j, node));
                for c in 0..d {
                    z[j * d + c] = f[c] * dt + vv[c] * dw;
                }
            }
            let mut out = vec![0.0; n + 1];
            let mut acc = vec![0.0; d];
            for i in 0..=n {
                acc.copy_from_slice(u.at(i, model.ancestor(leaf, n, i)));
                for j in i..n {
                    s.apply_add(j - i, 1.0, &z[j * d..(j + 1) * d], &mut acc);
                }
                s.apply_add(n - i, -1.0, u_t.at(leaf), &mut acc);
                out[i] = norm_q(&acc, q).powf(p);
            }
            out
        })
        .collect();
    let w = model.weight(n);
    let mut sums = vec![0.0; n + 1];
    for row in &per_leaf {
        for (s, x) in sums.iter_mut().zip(row) {
            *s += w * x;
        }
    }
    let by_time: Vec<f64> = sums.iter().map(|x| x.powf(1.0 / p)).collect();
    let max = by_time.iter().cloned().fold(0.0, f64::max);
    Ok(ResidualReport { by_time, max })
}

/// Defect of the discrete mild equation for a driver of the solution.
pub fn discrete_mild_residual(
    model: &StochasticModel,
    s: &SemigroupOperator,
    driver: &DriverSpec,
    u: &AdaptedProcess,
    v: &AdaptedProcess,
    u_t: &RandomVector,
    space: &SpaceSpec,
) -> Result<ResidualReport> {
    if driver.dim() != u.dim() {
        return Err(Error::DimensionMismatch { expected: u.dim(), actual: driver.dim() });
    }
    u.check_model(model)?;
    v.check_model(model)?;
    let drift = driver.eval_levels(model, u.levels(), v.levels(), 0, model.steps());
    mild_residual_for_drift(model, s, u, v, &drift, u_t, space)
}

/// Linear problem on the levels `[a, b]` with terminal value `xi` at level
/// `b` and frozen drift `g_j`, `j = a..b`:
/// `U_i = S(t_b - t_i) E_i xi - sum_{j=i}^{b-1} S(t_j - t_i) E_i g_j dt` and
/// `V_l = S(t_b - t_l) phi_l - sum_{j=l+1}^{b-1} S(t_j - t_l) k(t_j, sigma_l) dt`.
/// Returns `U` on `a..=b` and `V` on `a..b`.
pub(crate) fn linear_range(
    model: &StochasticModel,
    s: &SemigroupOperator,
    drift: &[Vec<f64>],
    xi: &[f64],
    dim: usize,
    a: usize,
    b: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let dt = model.grid().dt();
    let mut u: Vec<Vec<f64>> = (a..=b).map(|i| vec![0.0; model.states(i) * dim]).collect();
    let mut v: Vec<Vec<f64>> = (a..b).map(|i| vec![0.0; model.states(i) * dim]).collect();
    let add = |dst: &mut [f64], src: &[f64], k: usize, c: f64| {
        for (o, x) in dst.chunks_mut(dim).zip(src.chunks(dim)) {
            s.apply_add(k, c, x, o);
        }
    };
    let terminal = represent_values(model, xi, dim, b, a);
    for i in a..=b {
        add(&mut u[i - a], &terminal.cond[i - a], b - i, 1.0);
    }
    for l in a..b {
        add(&mut v[l - a], &terminal.integrand[l - a], b - l, 1.0);
    }
    for j in a..b {
        let g = &drift[j - a];
        if g.iter().all(|x| *x == 0.0) {
            continue;
        }
        let chain = represent_values(model, g, dim, j, a);
        for i in a..=j {
            add(&mut u[i - a], &chain.cond[i - a], j - i, -dt);
        }
        for l in a..j {
            add(&mut v[l - a], &chain.integrand[l - a], j - l, -dt);
        }
    }
    u[b - a].copy_from_slice(xi);
    (u, v)
}

fn check_process(model: &StochasticModel, f: &AdaptedProcess, dim: usize) -> Result<()> {
    f.check_model(model)?;
    if f.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, actual: f.dim() });
    }
    Ok(())
}

pub(crate) fn assemble(
    model: &StochasticModel,
    dim: usize,
    u_levels: Vec<Vec<f64>>,
    mut v_levels: Vec<Vec<f64>>,
) -> (AdaptedProcess, AdaptedProcess) {
    v_levels.push(vec![0.0; model.states(model.steps()) * dim]);
    (AdaptedProcess::from_levels(dim, u_levels), AdaptedProcess::from_levels(dim, v_levels))
}

/// `A = 0` with a drift independent of the solution:
/// `U(t_i) = M_i + sum_{j<i} f(t_j) dt` with `M` the martingale of
/// `u_T - sum_j f(t_j) dt`, and `V` its integrand.
pub fn solve_a0(
    model: &StochasticModel,
    f: &AdaptedProcess,
    u_t: &RandomVector,
    space: &SpaceSpec,
) -> Result<SolutionPair> {
    let d = u_t.dim();
    let n = model.steps();
    let s = SemigroupOperator::identity(d, *model.grid());
    check_common(model, &s, u_t, d, space)?;
    check_process(model, f, d)?;
    let dt = model.grid().dt();
    // running[i] = sum_{j<i} f(t_j) dt at the states of level i
    let mut running = vec![vec![0.0; model.states(0) * d]];
    for i in 0..n {
        let prev = &running[i];
        let mut next = vec![0.0; model.states(i + 1) * d];
        for m in 0..model.states(i + 1) {
            let parent = model.ancestor(m, i + 1, i);
            for c in 0..d {
                next[m * d + c] = prev[parent * d + c] + f.at(i, parent)[c] * dt;
            }
        }
        running.push(next);
    }
    let xi: Vec<f64> = u_t.values().iter().zip(&running[n]).map(|(a, b)| a - b).collect();
    let chain = represent_values(model, &xi, d, n, 0);
    let mut u_levels: Vec<Vec<f64>> =
        chain.cond.iter().zip(&running).map(|(m, r)| m.iter().zip(r).map(|(a, b)| a + b).collect()).collect();
    u_levels[n] = u_t.values().to_vec();
    let (u, v) = assemble(model, d, u_levels, chain.integrand);
    let drift: Vec<Vec<f64>> = f.levels()[..n].to_vec();
    let res = mild_residual_for_drift(model, &s, &u, &v, &drift, u_t, space)?;
    Ok(SolutionPair {
        u,
        v,
        residual: res.max,
        residual_by_time: res.by_time,
        iterations: 0,
        contraction_history: Vec::new(),
        intervals: Vec::new(),
    })
}

/// Linear drift `f(t, omega)` independent of the solution, any generator.
pub fn solve_linear_drift(
    model: &StochasticModel,
    s: &SemigroupOperator,
    f: &AdaptedProcess,
    u_t: &RandomVector,
    space: &SpaceSpec,
) -> Result<SolutionPair> {
    let d = u_t.dim();
    check_common(model, s, u_t, d, space)?;
    check_process(model, f, d)?;
    let n = model.steps();
    let drift: Vec<Vec<f64>> = f.levels()[..n].to_vec();
    let (u_levels, v_levels) = linear_range(model, s, &drift, u_t.values(), d, 0, n);
    let (u, v) = assemble(model, d, u_levels, v_levels);
    let res = mild_residual_for_drift(model, s, &u, &v, &drift, u_t, space)?;
    Ok(SolutionPair {
        u,
        v,
        residual: res.max,
        residual_by_time: res.by_time,
        iterations: 0,
        contraction_history: Vec::new(),
        intervals: Vec::new(),
    })
}

pub(crate) fn check_inputs(
    model: &StochasticModel,
    s: &SemigroupOperator,
    driver: &DriverSpec,
    u_t: &RandomVector,
    space: &SpaceSpec,
) -> Result<()> {
    driver.validate()?;
    check_common(model, s, u_t, driver.dim(), space)
}
