use serde::{Deserialize, Serialize};

use super::linear::SolutionPair;
use crate::error::{invalid, Error, Result};
use crate::semigroup::SemigroupOperator;
use crate::space::SpaceSpec;
use crate::stochastic::{lp_moment, AdaptedProcess, RandomVector, StochasticModel};

/// `max_i ||U_{i+1} - U_i||_{L^p} / sqrt(dt)`.
pub fn continuity_modulus(model: &StochasticModel, u: &AdaptedProcess, space: &SpaceSpec) -> Result<f64> {
    u.check_model(model)?;
    let d = u.dim();
    let h = model.grid().dt().sqrt();
    let mut worst = 0.0f64;
    for i in 0..model.steps() {
        let prev = u.slice(i).lift(model, i + 1)?;
        let inc = u.slice(i + 1).axpy(-1.0, &prev)?;
        debug_assert_eq!(inc.dim(), d);
        worst = worst.max(lp_moment(model, &inc, space)?.value / h);
    }
    Ok(worst)
}

/// Continuous-time solutions of the instances that have one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClosedForm {
    /// `f = 0`, `u_T = x`: `U = S(T-t) x`, `V = 0`.
    DeterministicFlow { x: Vec<f64> },
    /// `f = 0`, `u_T = W(T) x`: `U = W(t) S(T-t) x`, `V = S(T-t) x`.
    WienerFlow { x: Vec<f64> },
    /// `A = 0`, `f = c`, `u_T = x`: `U = x - (T-t) c`, `V = 0`.
    ConstantDrift { terminal: Vec<f64>, drift: Vec<f64> },
    /// `A = diag(a)`, `f = W(t) x`, `u_T = 0`:
    /// `U = -W(t) (1 - e^{-a(T-t)})/a x`, `V = -(1 - e^{-a(T-t)})/a x`.
    DiagonalWienerDrift { rates: Vec<f64>, x: Vec<f64> },
    /// `f = a u`, `u_T = x`: `U = e^{-a(T-t)} S(T-t) x`, `V = 0`.
    ExponentialDecay { rate: f64, x: Vec<f64> },
}

/// `(1 - e^{-a tau}) / a`, continuous at `a = 0`.
fn phi(a: f64, tau: f64) -> f64 {
    if a == 0.0 { tau } else { -(-a * tau).exp_m1() / a }
}

impl ClosedForm {
    pub fn dim(&self) -> usize {
        match self {
            ClosedForm::DeterministicFlow { x }
            | ClosedForm::WienerFlow { x }
            | ClosedForm::DiagonalWienerDrift { x, .. }
            | ClosedForm::ExponentialDecay { x, .. } => x.len(),
            ClosedForm::ConstantDrift { terminal, .. } => terminal.len(),
        }
    }

    /// `(U, V)` at grid time `t_i` where `W(t_i) = w`.
    pub fn eval(&self, s: &SemigroupOperator, i: usize, w: f64) -> (Vec<f64>, Vec<f64>) {
        let grid = s.grid();
        let n = grid.steps();
        let tau = grid.horizon() - grid.time(i);
        let d = self.dim();
        let flow = |x: &[f64]| {
            let mut out = vec![0.0; d];
            s.apply(n - i, x, &mut out);
            out
        };
        match self {
            ClosedForm::DeterministicFlow { x } => (flow(x), vec![0.0; d]),
            ClosedForm::WienerFlow { x } => {
                let sx = flow(x);
                (sx.iter().map(|v| w * v).collect(), sx)
            }
            ClosedForm::ConstantDrift { terminal, drift } => {
                (terminal.iter().zip(drift).map(|(x, c)| x - tau * c).collect(), vec![0.0; d])
            }
            ClosedForm::DiagonalWienerDrift { rates, x } => {
                let v: Vec<f64> = rates.iter().zip(x).map(|(a, xk)| -phi(*a, tau) * xk).collect();
                (v.iter().map(|vk| w * vk).collect(), v)
            }
            ClosedForm::ExponentialDecay { rate, x } => {
                let e = (-rate * tau).exp();
                (flow(x).iter().map(|v| e * v).collect(), vec![0.0; d])
            }
        }
    }

    pub fn check(&self, s: &SemigroupOperator) -> Result<()> {
        if self.dim() != s.dim() {
            return Err(Error::DimensionMismatch { expected: s.dim(), actual: self.dim() });
        }
        match self {
            ClosedForm::ConstantDrift { drift, .. } if drift.len() != self.dim() => {
                Err(invalid("drift", "drift and terminal value differ in dimension"))
            }
            ClosedForm::ConstantDrift { .. } if !s.is_identity() => {
                Err(invalid("generator", "the constant-drift closed form needs A = 0"))
            }
            ClosedForm::DiagonalWienerDrift { rates, .. } => {
                let g = s.generator();
                let diagonal = (0..g.nrows()).all(|r| (0..g.ncols()).all(|c| r == c || g[(r, c)] == 0.0));
                if rates.len() != self.dim() || !diagonal || rates.iter().enumerate().any(|(k, a)| g[(k, k)] != *a) {
                    return Err(invalid("generator", "the closed form needs A = diag(rates)"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// `max_i` of the `L^p` errors of `U(t_i)` (all `i`) and `V(t_i)` (`i < N`)
/// against the closed form.
pub fn closed_form_error(
    model: &StochasticModel,
    s: &SemigroupOperator,
    cf: &ClosedForm,
    sol: &SolutionPair,
    space: &SpaceSpec,
) -> Result<f64> {
    cf.check(s)?;
    sol.u.check_model(model)?;
    let (n, d) = (model.steps(), cf.dim());
    let mut worst = 0.0f64;
    for i in 0..=n {
        let states = model.states(i);
        let (mut eu, mut ev) = (Vec::with_capacity(states * d), Vec::with_capacity(states * d));
        for node in 0..states {
            let (u, v) = cf.eval(s, i, model.brownian(i, node));
            eu.extend(sol.u.at(i, node).iter().zip(&u).map(|(a, b)| a - b));
            ev.extend(sol.v.at(i, node).iter().zip(&v).map(|(a, b)| a - b));
        }
        worst = worst.max(lp_moment(model, &RandomVector::new(model, i, d, eu)?, space)?.value);
        if i < n {
            worst = worst.max(lp_moment(model, &RandomVector::new(model, i, d, ev)?, space)?.value);
        }
    }
    Ok(worst)
}

/// `log2(e_coarse / e_fine) / log2(n_fine / n_coarse)`.
pub fn observed_order(n_coarse: usize, e_coarse: f64, n_fine: usize, e_fine: f64) -> f64 {
    (e_coarse / e_fine).log2() / (n_fine as f64 / n_coarse as f64).log2()
}
