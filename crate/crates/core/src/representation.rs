//! Discrete martingale representation `xi = E xi + sum_i V_i dW_{i+1}` and
//! the two-parameter kernel `k(s, sigma)` that represents every time slice of
//! an adapted process.
//!
//! On the tree both are exact: one step of the filtration is spanned by the
//! constants and the increment. Path models project onto polynomials in `W(t_i)`
//! and report the defect instead.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gamma::{nested_gamma_norm, KernelGammaElement};
use crate::rng;
use crate::space::{norm_q, SpaceSpec};
use crate::stochastic::{
    ito_integral, time_l2_norm, tree_parent_average, AdaptedKernel, AdaptedProcess,
    RandomVector, StochasticModel,
};

/// Conditional expectations and integrand of one random vector, restricted to
/// the levels `from..=level`.
pub(crate) struct Chain {
    /// `cond[i - from]` is `E(xi | F_{t_i})`.
    pub cond: Vec<Vec<f64>>,
    /// `integrand[l - from]` is `V_l = E(xi dW_{l+1} | F_{t_l}) / dt`.
    pub integrand: Vec<Vec<f64>>,
}

pub(crate) fn represent_values(
    model: &StochasticModel,
    values: &[f64],
    dim: usize,
    level: usize,
    from: usize,
) -> Chain {
    let len = level - from;
    let mut cond = vec![Vec::new(); len + 1];
    let mut integrand = vec![Vec::new(); len];
    cond[len] = values.to_vec();
    if model.is_tree() {
        let two_h = 2.0 * model.grid().dt().sqrt();
        for l in (from..level).rev() {
            let next = &cond[l + 1 - from];
            let mut v = vec![0.0; model.states(l) * dim];
            for n in 0..model.states(l) {
                for c in 0..dim {
                    v[n * dim + c] = (next[(2 * n + 1) * dim + c] - next[2 * n * dim + c]) / two_h;
                }
            }
            cond[l - from] = tree_parent_average(next, dim);
            integrand[l - from] = v;
        }
    } else {
        // V_l is E_l(g(W_l + dW) dW) / dt for the level-(l+1) expansion g of
        // E(xi | F_{l+1}), from Gaussian moments rather than a second
        // regression, which would carry a 1/dt variance. When xi is itself a
        // polynomial in W(t_level) every conditional expectation is exact;
        // otherwise each level is a separate least-squares projection.
        let coefs: Vec<_> = match model.exact_expansion(values, dim, level) {
            Some(top) => (from..=level).map(|l| model.propagate_expansion(&top, level, l)).collect(),
            None => (from..=level).map(|l| model.regression_coefficients(values, dim, l)).collect(),
        };
        for l in from..level {
            cond[l - from] = model.fitted(&coefs[l - from], l);
            integrand[l - from] = model.integrand_of_expansion(&coefs[l + 1 - from], l);
        }
    }
    Chain { cond, integrand }
}

/// Largest one-step defect `M_{l+1} - M_l - V_l dW_{l+1}`: nodewise sup on
/// the tree, the root mean square per level on paths.
fn chain_defect(model: &StochasticModel, chain: &Chain, dim: usize, from: usize) -> f64 {
    let mut worst = 0.0f64;
    for (k, v) in chain.integrand.iter().enumerate() {
        let l = from + k;
        let (m0, m1) = (&chain.cond[k], &chain.cond[k + 1]);
        let states = model.states(l + 1);
        let (mut sup, mut sq) = (0.0f64, 0.0);
        for m in 0..states {
            let parent = model.ancestor(m, l + 1, l);
            let dw = model.increment(l, m);
            for c in 0..dim {
                let e = m1[m * dim + c] - m0[parent * dim + c] - v[parent * dim + c] * dw;
                sup = sup.max(e.abs());
                sq += e * e;
            }
        }
        let level_defect = if model.is_tree() { sup } else { (sq / states as f64).sqrt() };
        worst = worst.max(level_defect);
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationResult {
    /// `M_0 = E xi`.
    pub mean: Vec<f64>,
    /// `V`, zero from the level of `xi` on.
    pub integrand: AdaptedProcess,
    /// `M_i = E(xi | F_{t_i})`, equal to `xi` from its level on.
    pub martingale: AdaptedProcess,
    /// Largest defect of `M_{i+1} - M_i = V_i dW_{i+1}`.
    pub residual: f64,
}

/// Representation of a random vector measurable at any level `L <= N`.
pub fn martingale_representation(model: &StochasticModel, xi: &RandomVector) -> Result<RepresentationResult> {
    let (level, d) = (xi.level(), xi.dim());
    model.check_level(level)?;
    if xi.values().len() != model.states(level) * d {
        return Err(Error::ModelMismatch("random vector does not live on this model".into()));
    }
    let chain = represent_values(model, xi.values(), d, level, 0);
    let residual = chain_defect(model, &chain, d, 0);
    let n = model.steps();
    let mut m_levels = chain.cond;
    for i in level + 1..=n {
        m_levels.push(xi.lift(model, i)?.into_values());
    }
    let mut v_levels = chain.integrand;
    for i in level..=n {
        v_levels.push(vec![0.0; model.states(i) * d]);
    }
    Ok(RepresentationResult {
        mean: m_levels[0].clone(),
        integrand: AdaptedProcess::from_levels(d, v_levels),
        martingale: AdaptedProcess::from_levels(d, m_levels),
        residual,
    })
}

/// `max |xi - E xi - sum_{i<L} V_i dW_{i+1}|` over the states of the level of `xi`.
pub fn reconstruction_residual(
    model: &StochasticModel,
    xi: &RandomVector,
    rep: &RepresentationResult,
) -> Result<f64> {
    let integral = ito_integral(model, &rep.integrand, 0, xi.level())?;
    let d = xi.dim();
    let mut worst = 0.0f64;
    for n in 0..model.states(xi.level()) {
        for c in 0..d {
            worst = worst.max((xi.at(n)[c] - rep.mean[c] - integral.at(n)[c]).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelResult {
    /// `E f(t_i)` for `i = 0..N`.
    pub means: Vec<Vec<f64>>,
    pub kernel: AdaptedKernel,
    /// Largest representation defect over all slices.
    pub residual: f64,
}

/// One representation per time slice: `f(t_i) = E f(t_i) + sum_{j<i} k(t_i, sigma_j) dW_{j+1}`.
pub fn kernel_construction(model: &StochasticModel, f: &AdaptedProcess) -> Result<KernelResult> {
    f.check_model(model)?;
    let (n, d) = (model.steps(), f.dim());
    let parts: Vec<(Vec<f64>, AdaptedProcess, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let chain = represent_values(model, f.level(i), d, i, 0);
            let residual = chain_defect(model, &chain, d, 0);
            let mut levels = chain.integrand;
            for j in i..=n {
                levels.push(vec![0.0; model.states(j) * d]);
            }
            (chain.cond[0].clone(), AdaptedProcess::from_levels(d, levels), residual)
        })
        .collect();
    let mut means = Vec::with_capacity(n);
    let mut slices = Vec::with_capacity(n);
    let mut residual = 0.0f64;
    for (m, s, r) in parts {
        means.push(m);
        slices.push(s);
        residual = residual.max(r);
    }
    Ok(KernelResult { means, kernel: AdaptedKernel::from_slices_unchecked(d, slices), residual })
}

/// `max |f(t_i) - E f(t_i) - sum_{j<i} k(t_i, sigma_j) dW_{j+1}|` over slices and states.
pub fn kernel_slice_residual(model: &StochasticModel, f: &AdaptedProcess, res: &KernelResult) -> Result<f64> {
    let mut worst = 0.0f64;
    for (i, slice) in res.kernel.slices().iter().enumerate() {
        let integral = ito_integral(model, slice, 0, i)?;
        let d = f.dim();
        for node in 0..model.states(i) {
            for c in 0..d {
                let e = f.at(i, node)[c] - res.means[i][c] - integral.at(node)[c];
                worst = worst.max(e.abs());
            }
        }
    }
    Ok(worst)
}

/// The deterministic kernel seen along one state of level `N - 1` (tree) or
/// one path.
pub fn kernel_along_state(model: &StochasticModel, k: &AdaptedKernel, state: usize) -> Result<KernelGammaElement> {
    let n = model.steps();
    let last = n - 1;
    let d = k.dim();
    KernelGammaElement::from_fn(*model.grid(), d, true, |i, j| {
        if j < i { k.at(i, j, model.ancestor(state, last, j)).to_vec() } else { vec![0.0; d] }
    })
}

/// The two sides of the kernel norm estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormRatio {
    /// `||k||` in `L^p(Omega; gamma(0,T; gamma(0,T; X)))`.
    pub kernel_norm: f64,
    /// `||f||` in `L^p(Omega; gamma(0,T; X))`; computed in `L^2(0,T; X)` for
    /// Euclidean state norms, where the two agree.
    pub process_norm: f64,
    pub ratio: f64,
}

pub fn kernel_norm_ratio(
    model: &StochasticModel,
    f: &AdaptedProcess,
    k: &AdaptedKernel,
    space: &SpaceSpec,
    samples: usize,
    seed: u64,
) -> Result<NormRatio> {
    space.check_len(f.dim())?;
    let n = model.steps();
    let last = n - 1;
    let (p, q, dt) = (space.moment_exponent(), space.norm_exponent(), model.grid().dt());
    let per_state: Vec<f64> = (0..model.states(last))
        .into_par_iter()
        .map(|s| -> Result<f64> {
            if space.is_hilbert() {
                let mut sum = 0.0;
                for i in 0..n {
                    for j in 0..i {
                        sum += dt * dt * norm_q(k.at(i, j, model.ancestor(s, last, j)), q).powi(2);
                    }
                }
                Ok(sum.sqrt())
            } else {
                let el = kernel_along_state(model, k, s)?;
                Ok(nested_gamma_norm(&el, space, samples, rng::derive_seed(seed, s as u64))?.value)
            }
        })
        .collect::<Result<_>>()?;
    let w = model.weight(last);
    let kernel_norm = per_state.iter().map(|v| w * v.powf(p)).sum::<f64>().powf(1.0 / p);
    let process_norm = if space.is_hilbert() {
        time_l2_norm(model, f, space)?
    } else {
        crate::stochastic::gamma_norm_of_process(model, f, space, samples, seed)?.value
    };
    let ratio = if process_norm > 0.0 { kernel_norm / process_norm } else { 0.0 };
    Ok(NormRatio { kernel_norm, process_norm, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;

    fn tree(t: f64, n: usize) -> StochasticModel {
        StochasticModel::tree(TimeGrid::new(t, n).unwrap()).unwrap()
    }

    #[test]
    fn representation_examples() {
        let m = tree(1.0, 8);
        let c = RandomVector::constant(&m, 8, &[1.5, -2.0]);
        let r = martingale_representation(&m, &c).unwrap();
        assert_eq!(r.mean, vec![1.5, -2.0]);
        assert!(r.integrand.is_zero());

        let x = [2.0, 3.0];
        let wx = RandomVector::from_fn(&m, 8, 2, |v| vec![v.w * x[0], v.w * x[1]]);
        let r = martingale_representation(&m, &wx).unwrap();
        assert!(r.mean.iter().all(|v| v.abs() < 1e-14));
        for i in 0..8 {
            for n in 0..m.states(i) {
                assert!((r.integrand.at(i, n)[0] - 2.0).abs() < 1e-12);
                assert!((r.integrand.at(i, n)[1] - 3.0).abs() < 1e-12);
            }
        }
        assert!(r.residual < 1e-12);
        assert!(reconstruction_residual(&m, &wx, &r).unwrap() < 1e-12);
    }

    #[test]
    fn square_of_wiener() {
        let m = tree(1.0, 10);
        let xi = RandomVector::from_fn(&m, 10, 2, |v| vec![v.w * v.w, 0.0]);
        let r = martingale_representation(&m, &xi).unwrap();
        assert!((r.mean[0] - 1.0).abs() < 1e-13);
        for i in 0..10 {
            for n in 0..m.states(i) {
                assert!((r.integrand.at(i, n)[0] - 2.0 * m.brownian(i, n)).abs() < 1e-12);
            }
        }
        assert!(reconstruction_residual(&m, &xi, &r).unwrap() < 1e-12);
    }

    #[test]
    fn perturbing_one_node_breaks_reconstruction() {
        let m = tree(1.0, 5);
        let xi = RandomVector::from_fn(&m, 5, 1, |v| vec![v.w.exp()]);
        let mut r = martingale_representation(&m, &xi).unwrap();
        r.integrand.level_mut(3)[2] += 1e-3;
        assert!(reconstruction_residual(&m, &xi, &r).unwrap() > 1e-5);
    }

    #[test]
    fn kernel_examples() {
        let m = tree(1.0, 6);
        let x = AdaptedProcess::from_fn(&m, 1, |_| vec![4.0]);
        let k = kernel_construction(&m, &x).unwrap();
        assert!(k.kernel.slices().iter().all(|s| s.is_zero()));

        let w = AdaptedProcess::from_fn(&m, 2, |v| vec![v.w, -v.w]);
        let k = kernel_construction(&m, &w).unwrap();
        let expected = AdaptedKernel::from_fn(&m, 2, |_, _| vec![1.0, -1.0]).unwrap();
        assert!(k.kernel.max_abs_diff(&expected).unwrap() < 1e-12);
        assert!(kernel_slice_residual(&m, &w, &k).unwrap() < 1e-12);

        let w2 = AdaptedProcess::from_fn(&m, 1, |v| vec![v.w * v.w]);
        let k = kernel_construction(&m, &w2).unwrap();
        let expected = AdaptedKernel::from_fn(&m, 1, |_, v| vec![2.0 * v.w]).unwrap();
        assert!(k.kernel.max_abs_diff(&expected).unwrap() < 1e-12);
    }

    #[test]
    fn norm_ratio_for_wiener() {
        let m = tree(1.0, 8);
        let s = SpaceSpec::euclidean(1);
        let w = AdaptedProcess::from_fn(&m, 1, |v| vec![v.w]);
        let k = kernel_construction(&m, &w).unwrap();
        let r = kernel_norm_ratio(&m, &w, &k.kernel, &s, 0, 0).unwrap();
        // ||k||^2 = dt^2 N(N-1)/2 and ||f||^2 = sum_i t_i dt; both equal (N-1)/(2N).
        assert!((r.kernel_norm.powi(2) - 7.0 / 16.0).abs() < 1e-13);
        assert!((r.ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn paths_representation_is_close() {
        let m = StochasticModel::paths(TimeGrid::new(1.0, 4).unwrap(), 20_000, 9).unwrap();
        let xi = RandomVector::from_fn(&m, 4, 1, |v| vec![v.w * v.w]);
        let r = martingale_representation(&m, &xi).unwrap();
        assert!((r.mean[0] - 1.0).abs() < 0.05);
        for p in 0..50 {
            assert!((r.integrand.at(2, p)[0] - 2.0 * m.brownian(2, p)).abs() < 0.1);
        }
    }
}
