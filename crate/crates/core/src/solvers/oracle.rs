use rayon::prelude::*;

use super::driver::DriverSpec;
use super::linear::{assemble, check_inputs, discrete_mild_residual, SolutionPair};
use crate::error::{Error, Result};
use crate::semigroup::SemigroupOperator;
use crate::space::SpaceSpec;
use crate::stochastic::{RandomVector, StochasticModel};

/// Tolerance of the implicit step.
pub const INNER_TOL: f64 = 1e-12;
const INNER_MAX_ITER: usize = 1000;

/// Dynamic programming on the tree:
/// `U_i = E_i[S(dt) U_{i+1}] - dt f(t_i, U_i, V_i)` and
/// `V_i = E_i[S(dt) U_{i+1} dW_{i+1}] / dt`, with the implicit `U_i` found by
/// fixed-point iteration.
pub fn backward_recursion_oracle(
    model: &StochasticModel,
    s: &SemigroupOperator,
    driver: &DriverSpec,
    u_t: &RandomVector,
    space: &SpaceSpec,
) -> Result<SolutionPair> {
    if !model.is_tree() {
        return Err(Error::RequiresTree);
    }
    check_inputs(model, s, driver, u_t, space)?;
    let (n, d) = (model.steps(), driver.dim());
    let dt = model.grid().dt();
    let contraction = dt * driver.lipschitz();
    if contraction >= 1.0 {
        return Err(Error::InnerDivergence(contraction));
    }
    let h = dt.sqrt();
    let mut u_levels: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    let mut v_levels: Vec<Vec<f64>> = vec![Vec::new(); n];
    u_levels[n] = u_t.values().to_vec();
    for i in (0..n).rev() {
        let next = &u_levels[i + 1];
        let states = model.states(i);
        let mut u = vec![0.0; states * d];
        let mut v = vec![0.0; states * d];
        u.par_chunks_mut(d)
            .zip(v.par_chunks_mut(d))
            .enumerate()
            .try_for_each(|(node, (uo, vo))| -> Result<()> {
                let (mut down, mut up) = (vec![0.0; d], vec![0.0; d]);
                s.apply(1, &next[2 * node * d..(2 * node + 1) * d], &mut down);
                s.apply(1, &next[(2 * node + 1) * d..(2 * node + 2) * d], &mut up);
                let mean: Vec<f64> = down.iter().zip(&up).map(|(a, b)| 0.5 * (a + b)).collect();
                for c in 0..d {
                    vo[c] = (up[c] - down[c]) / (2.0 * h);
                }
                let view = model.node_view(i, node);
                let mut cur = mean.clone();
                let mut f = vec![0.0; d];
                for it in 0.. {
                    driver.eval_into(view, &cur, vo, &mut f);
                    let mut change = 0.0f64;
                    let mut scale = 1.0f64;
                    for c in 0..d {
                        let new = mean[c] - dt * f[c];
                        change = change.max((new - cur[c]).abs());
                        scale = scale.max(new.abs());
                        cur[c] = new;
                    }
                    if change <= INNER_TOL * scale || !driver.depends_on_solution() {
                        break;
                    }
                    if it >= INNER_MAX_ITER || !change.is_finite() {
                        return Err(Error::InnerDivergence(change));
                    }
                }
                uo.copy_from_slice(&cur);
                Ok(())
            })?;
        u_levels[i] = u;
        v_levels[i] = v;
    }
    let (u, v) = assemble(model, d, u_levels, v_levels);
    let res = discrete_mild_residual(model, s, driver, &u, &v, u_t, space)?;
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
