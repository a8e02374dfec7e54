use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::space::{norm_q, SpaceSpec};
use crate::stochastic::{AdaptedProcess, NodeView, RandomVector, StochasticModel};

/// Adapted processes given as functions of `(t, W(t))`; used for terminal
/// values, time-dependent drivers and affine offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSpec {
    Zero { dim: usize },
    Constant { x: Vec<f64> },
    /// `W(t) x`
    WienerLinear { x: Vec<f64> },
    /// `W(t)^2 x`
    WienerSquare { x: Vec<f64> },
    /// `t x`
    Time { x: Vec<f64> },
    /// `max(exp(W(t) - t/2) - strike, 0) x`
    CallLike { strike: f64, x: Vec<f64> },
}

impl ProcessSpec {
    pub fn dim(&self) -> usize {
        match self {
            ProcessSpec::Zero { dim } => *dim,
            ProcessSpec::Constant { x }
            | ProcessSpec::WienerLinear { x }
            | ProcessSpec::WienerSquare { x }
            | ProcessSpec::Time { x }
            | ProcessSpec::CallLike { x, .. } => x.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(invalid("dim", "process dimension must be positive"));
        }
        let finite = match self {
            ProcessSpec::Zero { .. } => true,
            ProcessSpec::CallLike { strike, x } => strike.is_finite() && x.iter().all(|v| v.is_finite()),
            ProcessSpec::Constant { x }
            | ProcessSpec::WienerLinear { x }
            | ProcessSpec::WienerSquare { x }
            | ProcessSpec::Time { x } => x.iter().all(|v| v.is_finite()),
        };
        if !finite {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ProcessSpec::Zero { .. } => true,
            ProcessSpec::Constant { x }
            | ProcessSpec::WienerLinear { x }
            | ProcessSpec::WienerSquare { x }
            | ProcessSpec::Time { x }
            | ProcessSpec::CallLike { x, .. } => x.iter().all(|v| *v == 0.0),
        }
    }

    fn scalar(&self, view: NodeView) -> f64 {
        match self {
            ProcessSpec::Zero { .. } => 0.0,
            ProcessSpec::Constant { .. } => 1.0,
            ProcessSpec::WienerLinear { .. } => view.w,
            ProcessSpec::WienerSquare { .. } => view.w * view.w,
            ProcessSpec::Time { .. } => view.t,
            ProcessSpec::CallLike { strike, .. } => ((view.w - 0.5 * view.t).exp() - strike).max(0.0),
        }
    }

    pub fn eval_into(&self, view: NodeView, out: &mut [f64]) {
        match self {
            ProcessSpec::Zero { .. } => out.iter_mut().for_each(|o| *o = 0.0),
            ProcessSpec::Constant { x }
            | ProcessSpec::WienerLinear { x }
            | ProcessSpec::WienerSquare { x }
            | ProcessSpec::Time { x }
            | ProcessSpec::CallLike { x, .. } => {
                let s = self.scalar(view);
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = s * xi;
                }
            }
        }
    }

    pub fn eval(&self, view: NodeView) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(view, &mut out);
        out
    }

    pub fn process(&self, model: &StochasticModel) -> AdaptedProcess {
        AdaptedProcess::from_fn(model, self.dim(), |v| self.eval(v))
    }

    /// The value at the terminal time, as a level-`N` random vector.
    pub fn terminal(&self, model: &StochasticModel) -> RandomVector {
        RandomVector::from_fn(model, model.steps(), self.dim(), |v| self.eval(v))
    }

    /// Largest state norm over all nodes of the model.
    pub fn sup_norm(&self, model: &StochasticModel, space: &SpaceSpec) -> f64 {
        let mut out = vec![0.0; self.dim()];
        let mut worst = 0.0f64;
        for i in 0..=model.steps() {
            for n in 0..model.states(i) {
                self.eval_into(model.node_view(i, n), &mut out);
                worst = worst.max(norm_q(&out, space.norm_exponent()));
            }
        }
        worst
    }
}

/// The driver `f(t, omega, u, v)` of the equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverSpec {
    Zero { dim: usize },
    Constant { c: Vec<f64> },
    /// `f = g(t, omega)`, independent of the solution.
    TimeProcess { process: ProcessSpec },
    /// `f = a u + b v + c(t, omega)`.
    Affine { u_coeff: f64, v_coeff: f64, offset: ProcessSpec },
    /// `f = L sin(u)` componentwise.
    SinU { lipschitz: f64, dim: usize },
    /// `f = L tanh(u + v)` componentwise.
    TanhUv { lipschitz: f64, dim: usize },
}

impl DriverSpec {
    pub fn dim(&self) -> usize {
        match self {
            DriverSpec::Zero { dim } | DriverSpec::SinU { dim, .. } | DriverSpec::TanhUv { dim, .. } => *dim,
            DriverSpec::Constant { c } => c.len(),
            DriverSpec::TimeProcess { process } => process.dim(),
            DriverSpec::Affine { offset, .. } => offset.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(invalid("dim", "driver dimension must be positive"));
        }
        match self {
            DriverSpec::Constant { c } if c.iter().any(|v| !v.is_finite()) => Err(Error::NonFinite),
            DriverSpec::TimeProcess { process } => process.validate(),
            DriverSpec::Affine { u_coeff, v_coeff, offset } => {
                if !(u_coeff.is_finite() && v_coeff.is_finite()) {
                    return Err(Error::NonFinite);
                }
                offset.validate()
            }
            DriverSpec::SinU { lipschitz, .. } | DriverSpec::TanhUv { lipschitz, .. }
                if !(lipschitz.is_finite() && *lipschitz >= 0.0) =>
            {
                Err(invalid("lipschitz", format!("must be finite and non-negative, got {lipschitz}")))
            }
            _ => Ok(()),
        }
    }

    /// Declared Lipschitz constant `L` in
    /// `||f(x,y) - f(x',y')|| <= L (||x - x'|| + ||y - y'||)`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            DriverSpec::Zero { .. } | DriverSpec::Constant { .. } | DriverSpec::TimeProcess { .. } => 0.0,
            DriverSpec::Affine { u_coeff, v_coeff, .. } => u_coeff.abs().max(v_coeff.abs()),
            DriverSpec::SinU { lipschitz, .. } | DriverSpec::TanhUv { lipschitz, .. } => *lipschitz,
        }
    }

    /// Growth constant `C` in `||f(x,y)|| <= C (1 + ||x|| + ||y||)`; offsets
    /// contribute their largest norm over the model.
    pub fn growth(&self, model: &StochasticModel, space: &SpaceSpec) -> f64 {
        match self {
            DriverSpec::Zero { .. } => 0.0,
            DriverSpec::Constant { c } => norm_q(c, space.norm_exponent()),
            DriverSpec::TimeProcess { process } => process.sup_norm(model, space),
            DriverSpec::Affine { offset, .. } => self.lipschitz().max(offset.sup_norm(model, space)),
            DriverSpec::SinU { lipschitz, .. } | DriverSpec::TanhUv { lipschitz, .. } => *lipschitz,
        }
    }

    pub fn depends_on_solution(&self) -> bool {
        match self {
            DriverSpec::Zero { .. } | DriverSpec::Constant { .. } | DriverSpec::TimeProcess { .. } => false,
            DriverSpec::Affine { u_coeff, v_coeff, .. } => *u_coeff != 0.0 || *v_coeff != 0.0,
            DriverSpec::SinU { lipschitz, .. } | DriverSpec::TanhUv { lipschitz, .. } => *lipschitz != 0.0,
        }
    }

    /// True when `f` vanishes identically.
    pub fn is_zero(&self) -> bool {
        match self {
            DriverSpec::Zero { .. } => true,
            DriverSpec::Constant { c } => c.iter().all(|v| *v == 0.0),
            DriverSpec::TimeProcess { process } => process.is_zero(),
            DriverSpec::Affine { u_coeff, v_coeff, offset } => *u_coeff == 0.0 && *v_coeff == 0.0 && offset.is_zero(),
            DriverSpec::SinU { lipschitz, .. } | DriverSpec::TanhUv { lipschitz, .. } => *lipschitz == 0.0,
        }
    }

    pub fn eval_into(&self, view: NodeView, u: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            DriverSpec::Zero { .. } => out.iter_mut().for_each(|o| *o = 0.0),
            DriverSpec::Constant { c } => out.copy_from_slice(c),
            DriverSpec::TimeProcess { process } => process.eval_into(view, out),
            DriverSpec::Affine { u_coeff, v_coeff, offset } => {
                offset.eval_into(view, out);
                for k in 0..out.len() {
                    out[k] += u_coeff * u[k] + v_coeff * v[k];
                }
            }
            DriverSpec::SinU { lipschitz, .. } => {
                for k in 0..out.len() {
                    out[k] = lipschitz * u[k].sin();
                }
            }
            DriverSpec::TanhUv { lipschitz, .. } => {
                for k in 0..out.len() {
                    out[k] = lipschitz * (u[k] + v[k]).tanh();
                }
            }
        }
    }

    /// `f(t_i, U_i, V_i)` at every node of the levels `from..to`.
    pub(crate) fn eval_levels(
        &self,
        model: &StochasticModel,
        u: &[Vec<f64>],
        v: &[Vec<f64>],
        from: usize,
        to: usize,
    ) -> Vec<Vec<f64>> {
        let d = self.dim();
        (from..to)
            .map(|i| {
                let (ul, vl) = (&u[i - from], &v[i - from]);
                let mut out = vec![0.0; model.states(i) * d];
                for n in 0..model.states(i) {
                    let view = model.node_view(i, n);
                    let r = n * d..(n + 1) * d;
                    self.eval_into(view, &ul[r.clone()], &vl[r.clone()], &mut out[r]);
                }
                out
            })
            .collect()
    }

    /// Checks the declared Lipschitz and growth constants on random
    /// arguments at random nodes.
    pub fn check_bounds(
        &self,
        model: &StochasticModel,
        space: &SpaceSpec,
        samples: usize,
        seed: u64,
    ) -> Result<DriverCheck> {
        self.validate()?;
        self.check_bounds_against(model, space, samples, seed, self.lipschitz(), self.growth(model, space))
    }

    pub(crate) fn check_bounds_against(
        &self,
        model: &StochasticModel,
        space: &SpaceSpec,
        samples: usize,
        seed: u64,
        lip: f64,
        growth: f64,
    ) -> Result<DriverCheck> {
        space.check_len(self.dim())?;
        let (d, q) = (self.dim(), space.norm_exponent());
        let mut r = rng::stream(seed, 0x11b);
        let draw = |r: &mut rng::StreamRng| -> Vec<f64> {
            let scale = (2.0 * rng::normal(r)).exp();
            (0..d).map(|_| scale * rng::normal(r)).collect()
        };
        let (mut worst_lip, mut worst_growth) = (0.0f64, 0.0f64);
        let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
        for _ in 0..samples {
            let level = r.random_range(0..=model.steps());
            let node = r.random_range(0..model.states(level));
            let view = model.node_view(level, node);
            let (x, y, x2, y2) = (draw(&mut r), draw(&mut r), draw(&mut r), draw(&mut r));
            self.eval_into(view, &x, &y, &mut a);
            self.eval_into(view, &x2, &y2, &mut b);
            let diff: Vec<f64> = a.iter().zip(&b).map(|(s, t)| s - t).collect();
            let dx: Vec<f64> = x.iter().zip(&x2).map(|(s, t)| s - t).collect();
            let dy: Vec<f64> = y.iter().zip(&y2).map(|(s, t)| s - t).collect();
            let lhs = norm_q(&diff, q);
            let rhs = norm_q(&dx, q) + norm_q(&dy, q);
            if rhs > 0.0 {
                worst_lip = worst_lip.max(lhs / rhs);
            }
            let g = norm_q(&a, q) / (1.0 + norm_q(&x, q) + norm_q(&y, q));
            worst_growth = worst_growth.max(g);
        }
        let slack = 1.0 + 1e-12;
        if worst_lip > lip * slack + 1e-14 {
            return Err(Error::DriverBound { bound: "lipschitz", observed: worst_lip, declared: lip });
        }
        if worst_growth > growth * slack + 1e-14 {
            return Err(Error::DriverBound { bound: "growth", observed: worst_growth, declared: growth });
        }
        Ok(DriverCheck { lipschitz: lip, observed_lipschitz: worst_lip, growth, observed_growth: worst_growth, samples })
    }

    /// The driver as a process when it does not depend on the solution.
    pub fn as_process(&self, model: &StochasticModel) -> Option<AdaptedProcess> {
        if self.depends_on_solution() {
            return None;
        }
        let d = self.dim();
        let zero = vec![0.0; d];
        Some(AdaptedProcess::from_fn(model, d, |view| {
            let mut out = vec![0.0; d];
            self.eval_into(view, &zero, &zero, &mut out);
            out
        }))
    }
}

/// Largest observed ratios next to the declared constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriverCheck {
    pub lipschitz: f64,
    pub observed_lipschitz: f64,
    pub growth: f64,
    pub observed_growth: f64,
    pub samples: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;

    fn model() -> StochasticModel {
        StochasticModel::tree(TimeGrid::new(1.0, 6).unwrap()).unwrap()
    }

    #[test]
    fn catalog_passes_its_own_bounds() {
        let m = model();
        let s = SpaceSpec::new(2, 3.0, 2.0).unwrap();
        let drivers = [
            DriverSpec::Zero { dim: 2 },
            DriverSpec::Constant { c: vec![1.0, -2.0] },
            DriverSpec::TimeProcess { process: ProcessSpec::WienerSquare { x: vec![1.0, 0.5] } },
            DriverSpec::Affine { u_coeff: -0.7, v_coeff: 0.3, offset: ProcessSpec::Time { x: vec![1.0, 1.0] } },
            DriverSpec::SinU { lipschitz: 0.8, dim: 2 },
            DriverSpec::TanhUv { lipschitz: 1.3, dim: 2 },
        ];
        for d in &drivers {
            d.check_bounds(&m, &s, 10_000, 3).unwrap();
        }
    }

    #[test]
    fn understated_constants_are_caught() {
        let m = model();
        let s = SpaceSpec::euclidean(2);
        let d = DriverSpec::TanhUv { lipschitz: 1.0, dim: 2 };
        assert!(d.check_bounds_against(&m, &s, 10_000, 1, 1.0, 1.0).is_ok());
        assert!(matches!(
            d.check_bounds_against(&m, &s, 10_000, 1, 0.5, 1.0),
            Err(Error::DriverBound { bound: "lipschitz", .. })
        ));
        let c = DriverSpec::Constant { c: vec![3.0, 4.0] };
        assert!(matches!(
            c.check_bounds_against(&m, &s, 10_000, 1, 0.0, 4.0),
            Err(Error::DriverBound { bound: "growth", .. })
        ));
    }

    #[test]
    fn process_values() {
        let m = model();
        let v = m.node_view(3, 5);
        assert_eq!(ProcessSpec::WienerLinear { x: vec![2.0] }.eval(v), vec![2.0 * v.w]);
        let call = ProcessSpec::CallLike { strike: 1.0, x: vec![1.0] }.eval(v)[0];
        assert_eq!(call, ((v.w - 0.5 * v.t).exp() - 1.0).max(0.0));
        assert!(DriverSpec::Affine { u_coeff: 0.0, v_coeff: 0.0, offset: ProcessSpec::Zero { dim: 1 } }.is_zero());
    }
}
