use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use super::model::StochasticModel;
use super::process::{AdaptedKernel, AdaptedProcess, RandomVector};
use crate::error::{Error, Result};
use crate::gamma::{
    gamma_p_norm, FiniteRankGammaElement, GammaMethod, GammaNormEstimate, HilbertFamily,
};
use crate::rng;
use crate::space::{norm_q, SpaceSpec};

/// Quadrature nodes per dimension for per-state gamma norms.
const PROCESS_GAMMA_NODES: usize = 24;

/// A moment together with its Monte-Carlo standard error (zero on trees).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// One tree level up: the average over the two children of every node.
pub(crate) fn tree_parent_average(values: &[f64], dim: usize) -> Vec<f64> {
    let parents = values.len() / (2 * dim);
    let mut out = vec![0.0; parents * dim];
    for n in 0..parents {
        for c in 0..dim {
            out[n * dim + c] = 0.5 * (values[2 * n * dim + c] + values[(2 * n + 1) * dim + c]);
        }
    }
    out
}

/// `E(xi | F_{t_level})` from values given at `from >= level`.
pub(crate) fn cond_exp_values(
    model: &StochasticModel,
    values: &[f64],
    dim: usize,
    from: usize,
    level: usize,
) -> Vec<f64> {
    if from == level {
        return values.to_vec();
    }
    if model.is_tree() {
        let mut cur = tree_parent_average(values, dim);
        for _ in level + 1..from {
            cur = tree_parent_average(&cur, dim);
        }
        cur
    } else if let Some(coef) = model.exact_expansion(values, dim, from) {
        model.fitted(&model.propagate_expansion(&coef, from, level), level)
    } else {
        model.regress(values, dim, level)
    }
}

/// `E(xi | F_{t_level})`: exact averaging on the tree, regression on the
/// polynomial basis in `W(t_level)` for paths.
pub fn conditional_expectation(
    model: &StochasticModel,
    xi: &RandomVector,
    level: usize,
) -> Result<RandomVector> {
    model.check_level(xi.level())?;
    if level > xi.level() {
        return Err(Error::LevelOutOfRange { level, steps: xi.level() });
    }
    let values = cond_exp_values(model, xi.values(), xi.dim(), xi.level(), level);
    RandomVector::new(model, level, xi.dim(), values)
}

/// Left-endpoint sum `sum_{i=a}^{b-1} phi(t_i) dW_{i+1}` as a level-`b` vector.
pub fn ito_integral(
    model: &StochasticModel,
    phi: &AdaptedProcess,
    from: usize,
    to: usize,
) -> Result<RandomVector> {
    phi.check_model(model)?;
    model.check_level(to)?;
    if from > to {
        return Err(Error::LevelOutOfRange { level: from, steps: to });
    }
    let d = phi.dim();
    let mut acc = vec![0.0; model.states(from) * d];
    for i in from..to {
        let next_states = model.states(i + 1);
        let mut next = vec![0.0; next_states * d];
        for m in 0..next_states {
            let parent = model.ancestor(m, i + 1, i);
            let dw = model.increment(i, m);
            let src = phi.at(i, parent);
            for c in 0..d {
                next[m * d + c] = acc[parent * d + c] + src[c] * dw;
            }
        }
        acc = next;
    }
    RandomVector::new(model, to, d, acc)
}

/// `(E ||xi||^p)^(1/p)` in the state norm: an exact weighted sum on the tree,
/// a sample mean with a delta-method standard error on paths.
pub fn lp_moment(model: &StochasticModel, xi: &RandomVector, space: &SpaceSpec) -> Result<MomentEstimate> {
    space.check_len(xi.dim())?;
    let (p, q) = (space.moment_exponent(), space.norm_exponent());
    let level = xi.level();
    moment_of(model, level, p, (0..model.states(level)).map(|n| norm_q(xi.at(n), q).powf(p)))
}

/// `E ||xi||` in the state norm (same estimator conventions as [`lp_moment`]).
pub fn mean_norm(model: &StochasticModel, xi: &RandomVector, space: &SpaceSpec) -> Result<MomentEstimate> {
    space.check_len(xi.dim())?;
    let q = space.norm_exponent();
    let level = xi.level();
    moment_of(model, level, 1.0, (0..model.states(level)).map(|n| norm_q(xi.at(n), q)))
}

/// `(E X)^(1/p)` for per-state values `X >= 0` at `level`.
fn moment_of<I: Iterator<Item = f64>>(
    model: &StochasticModel,
    level: usize,
    p: f64,
    powers: I,
) -> Result<MomentEstimate> {
    let w = model.weight(level);
    let mut m = rng::Moments::default();
    for x in powers {
        m.push(x);
    }
    let mean = m.sum * w;
    if !mean.is_finite() {
        return Err(Error::NonFinite);
    }
    let value = mean.powf(1.0 / p);
    let std_error = if model.is_tree() || mean == 0.0 { 0.0 } else { m.std_error() * value / (p * mean) };
    Ok(MomentEstimate { value, std_error })
}

/// Weighted mean of a random vector.
pub fn expectation(model: &StochasticModel, xi: &RandomVector) -> Vec<f64> {
    let d = xi.dim();
    let w = model.weight(xi.level());
    let mut out = vec![0.0; d];
    for n in 0..model.states(xi.level()) {
        for (o, v) in out.iter_mut().zip(xi.at(n)) {
            *o += w * v;
        }
    }
    out
}

/// Both orders of the double sum in the stochastic Fubini identity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FubiniReport {
    /// `sum_s h(s) dt sum_{sigma<s} k(s,sigma) dW(sigma)` at the terminal level.
    pub lhs: Vec<f64>,
    /// `sum_sigma [sum_{s>sigma} h(s) k(s,sigma) dt] dW(sigma)`.
    pub rhs: Vec<f64>,
    pub discrepancy: f64,
}

pub fn stochastic_fubini_swap(
    model: &StochasticModel,
    k: &AdaptedKernel,
    h: &[f64],
) -> Result<FubiniReport> {
    let n = model.steps();
    if h.len() != n {
        return Err(Error::ShapeMismatch(format!("weight needs {n} values, got {}", h.len())));
    }
    if k.slices().len() != n {
        return Err(Error::ModelMismatch("kernel does not live on this model".into()));
    }
    for s in k.slices() {
        s.check_model(model)?;
    }
    let (d, dt) = (k.dim(), model.grid().dt());
    let leaves = model.states(n);
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..leaves)
        .into_par_iter()
        .map(|leaf| {
            let mut lhs = vec![0.0; d];
            for i in 0..n {
                let mut inner = vec![0.0; d];
                for j in 0..i {
                    let dw = model.increment(j, model.ancestor(leaf, n, j + 1));
                    for (a, v) in inner.iter_mut().zip(k.at(i, j, model.ancestor(leaf, n, j))) {
                        *a += v * dw;
                    }
                }
                for (l, v) in lhs.iter_mut().zip(&inner) {
                    *l += h[i] * dt * v;
                }
            }
            let mut rhs = vec![0.0; d];
            for j in 0..n {
                let node = model.ancestor(leaf, n, j);
                let mut inner = vec![0.0; d];
                for i in j + 1..n {
                    for (a, v) in inner.iter_mut().zip(k.at(i, j, node)) {
                        *a += h[i] * v * dt;
                    }
                }
                let dw = model.increment(j, model.ancestor(leaf, n, j + 1));
                for (r, v) in rhs.iter_mut().zip(&inner) {
                    *r += v * dw;
                }
            }
            (lhs, rhs)
        })
        .collect();
    let mut lhs = Vec::with_capacity(leaves * d);
    let mut rhs = Vec::with_capacity(leaves * d);
    let mut discrepancy = 0.0f64;
    for (l, r) in rows {
        for (a, b) in l.iter().zip(&r) {
            discrepancy = discrepancy.max((a - b).abs());
        }
        lhs.extend(l);
        rhs.extend(r);
    }
    Ok(FubiniReport { lhs, rhs, discrepancy })
}

/// Per-state Gram matrices `sum_{i<L} dt phi_i phi_i^T` of the levels
/// `from..from+len`, indexed by the states of the last of those levels.
fn path_grams(model: &StochasticModel, levels: &[Vec<f64>], from: usize, dim: usize, dt: f64) -> Vec<Vec<f64>> {
    let last = from + levels.len() - 1;
    let states = model.states(last);
    (0..states)
        .into_par_iter()
        .map(|s| {
            let mut g = vec![0.0; dim * dim];
            for (off, lv) in levels.iter().enumerate() {
                let node = model.ancestor(s, last, from + off);
                let x = &lv[node * dim..(node + 1) * dim];
                for r in 0..dim {
                    for c in 0..dim {
                        g[r * dim + c] += dt * x[r] * x[c];
                    }
                }
            }
            g
        })
        .collect()
}

/// Square of the gamma norm of a finite-rank element with Gram matrix `g`.
fn gamma_sq_from_gram(g: &[f64], dim: usize, space: &SpaceSpec, samples: usize, seed: u64) -> Result<(f64, f64)> {
    if space.is_hilbert() {
        return Ok(((0..dim).map(|i| g[i * dim + i]).sum(), 0.0));
    }
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(dim, dim, g));
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..dim).filter(|&k| eig.eigenvalues[k] > 1e-14 * top.max(f64::MIN_POSITIVE)).collect();
    if keep.is_empty() {
        return Ok((0.0, 0.0));
    }
    let cols = DMatrix::from_fn(dim, keep.len(), |r, c| {
        eig.eigenvectors[(r, keep[c])] * eig.eigenvalues[keep[c]].sqrt()
    });
    let el = FiniteRankGammaElement::new(cols, HilbertFamily::Abstract(keep.len()))?;
    if keep.len() <= 3 {
        let v = crate::gamma::gaussian_moment_quadrature(&el, space, 2.0, PROCESS_GAMMA_NODES)?;
        Ok((v, 0.0))
    } else {
        let est = gamma_p_norm(&el, space, 2.0, samples, seed)?;
        Ok((est.value * est.value, 2.0 * est.value * est.std_error))
    }
}

/// `(E ||phi||^p_{gamma(0,T;X)})^(1/p)` over the cells `0..N`. Each state's
/// time slice is reduced to its Gram matrix; the gamma norm is then exact
/// (Euclidean), by quadrature (rank at most three) or Monte-Carlo.
pub fn gamma_norm_of_process(
    model: &StochasticModel,
    phi: &AdaptedProcess,
    space: &SpaceSpec,
    samples: usize,
    seed: u64,
) -> Result<GammaNormEstimate> {
    phi.check_model(model)?;
    space.check_len(phi.dim())?;
    let n = model.steps();
    let d = phi.dim();
    let grams = path_grams(model, &phi.levels()[..n], 0, d, model.grid().dt());
    let per_state: Vec<(f64, f64)> = grams
        .par_iter()
        .enumerate()
        .map(|(s, g)| gamma_sq_from_gram(g, d, space, samples, rng::derive_seed(seed, s as u64)))
        .collect::<Result<_>>()?;
    let p = space.moment_exponent();
    let level = n - 1;
    let w = model.weight(level);
    let mut m = rng::Moments::default();
    let mut inner_var = 0.0;
    for (g2, se2) in &per_state {
        let gamma = g2.max(0.0).sqrt();
        m.push(gamma.powf(p));
        if *se2 > 0.0 && gamma > 0.0 {
            // d(gamma^p) = p gamma^(p-2) / 2 d(gamma^2)
            let dp = 0.5 * p * gamma.powf(p - 2.0) * se2;
            inner_var += (w * dp).powi(2);
        }
    }
    let mean = m.sum * w;
    let value = mean.powf(1.0 / p);
    let outer = if model.is_tree() { 0.0 } else { m.std_error() };
    let se_mean = (outer * outer + inner_var).sqrt();
    let std_error = if mean > 0.0 { se_mean * value / (p * mean) } else { 0.0 };
    let method = if space.is_hilbert() {
        GammaMethod::HilbertExact
    } else if d <= 3 {
        GammaMethod::Quadrature
    } else {
        GammaMethod::MonteCarlo
    };
    Ok(GammaNormEstimate { value, std_error, samples: if method == GammaMethod::MonteCarlo { samples } else { 0 }, method })
}

/// `(E (sum_i dt ||x_i||^2)^(p/2))^(1/p)` over consecutive levels starting at
/// `from`: the `L^p(Omega; L^2(I; X))` norm of a step process on an interval.
pub(crate) fn time_l2_norm_levels(
    model: &StochasticModel,
    levels: &[Vec<f64>],
    from: usize,
    dim: usize,
    space: &SpaceSpec,
) -> f64 {
    if levels.is_empty() {
        return 0.0;
    }
    let (p, q, dt) = (space.moment_exponent(), space.norm_exponent(), model.grid().dt());
    let last = from + levels.len() - 1;
    // Tree: accumulate down the levels; paths: one sum per path.
    let mut acc: Vec<f64> = vec![0.0; model.states(from)];
    for (off, lv) in levels.iter().enumerate() {
        let level = from + off;
        if off > 0 {
            let prev = acc;
            acc = (0..model.states(level)).map(|m| prev[model.ancestor(m, level, level - 1)]).collect();
        }
        for (s, a) in acc.iter_mut().enumerate() {
            *a += dt * norm_q(&lv[s * dim..(s + 1) * dim], q).powi(2);
        }
    }
    let w = model.weight(last);
    acc.iter().map(|a| w * a.powf(0.5 * p)).sum::<f64>().powf(1.0 / p)
}

/// `L^p(Omega; L^2(0,T; X))` norm over the cells `0..N`; coincides with
/// [`gamma_norm_of_process`] for Euclidean state norms.
pub fn time_l2_norm(model: &StochasticModel, phi: &AdaptedProcess, space: &SpaceSpec) -> Result<f64> {
    phi.check_model(model)?;
    space.check_len(phi.dim())?;
    let n = model.steps();
    Ok(time_l2_norm_levels(model, &phi.levels()[..n], 0, phi.dim(), space))
}

/// Builds a process on `model` and on a copy whose increments after
/// `t_level` are redrawn; returns the largest difference at levels
/// `0..=level`. Zero for any construction that is adapted.
pub fn scrambling_check<F>(model: &StochasticModel, level: usize, seed: u64, build: F) -> Result<f64>
where
    F: Fn(&StochasticModel) -> Result<AdaptedProcess>,
{
    let other = model.with_resampled_tail(level, seed)?;
    let a = build(model)?;
    let b = build(&other)?;
    let mut worst = 0.0f64;
    for i in 0..=level {
        for (x, y) in a.level(i).iter().zip(b.level(i)) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use approx::assert_relative_eq;

    fn tree(t: f64, n: usize) -> StochasticModel {
        StochasticModel::tree(TimeGrid::new(t, n).unwrap()).unwrap()
    }

    #[test]
    fn conditional_expectation_examples() {
        let m = tree(1.5, 8);
        let c = RandomVector::constant(&m, 8, &[2.0, -1.0]);
        let ce = conditional_expectation(&m, &c, 3).unwrap();
        assert!(ce.values().chunks(2).all(|v| v == [2.0, -1.0]));
        let wt = RandomVector::from_fn(&m, 8, 1, |v| vec![v.w]);
        let w2 = RandomVector::from_fn(&m, 8, 1, |v| vec![v.w * v.w]);
        for i in 0..=8 {
            let e1 = conditional_expectation(&m, &wt, i).unwrap();
            let e2 = conditional_expectation(&m, &w2, i).unwrap();
            for n in 0..m.states(i) {
                let w = m.brownian(i, n);
                assert!((e1.at(n)[0] - w).abs() < 1e-12);
                assert!((e2.at(n)[0] - (w * w + 1.5 - m.grid().time(i))).abs() < 1e-12);
            }
        }
        assert!(conditional_expectation(&m, &ce, 5).is_err());
    }

    #[test]
    fn ito_integral_examples() {
        let m = tree(1.0, 6);
        let x = [1.0, 2.0];
        let phi = AdaptedProcess::from_fn(&m, 2, |_| x.to_vec());
        let i = ito_integral(&m, &phi, 2, 5).unwrap();
        for node in 0..32 {
            let dw = m.brownian(5, node) - m.brownian(2, node >> 3);
            assert!((i.at(node)[1] - 2.0 * dw).abs() < 1e-14);
        }
        let z = ito_integral(&m, &AdaptedProcess::zeros(&m, 2), 0, 6).unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn lp_moment_examples() {
        let m = tree(2.0, 10);
        let l2 = SpaceSpec::euclidean(1);
        let c = RandomVector::constant(&m, 10, &[-3.0]);
        assert_relative_eq!(lp_moment(&m, &c, &l2).unwrap().value, 3.0, epsilon = 1e-14);
        let w = RandomVector::from_fn(&m, 10, 1, |v| vec![v.w]);
        assert_relative_eq!(lp_moment(&m, &w, &l2).unwrap().value, 2f64.sqrt(), epsilon = 1e-13);
        let p4 = SpaceSpec::new(1, 2.0, 4.0).unwrap();
        let dt: f64 = 0.2;
        let expected = (3.0 * 4.0 - 2.0 * 2.0 * dt).powf(0.25);
        assert_relative_eq!(lp_moment(&m, &w, &p4).unwrap().value, expected, epsilon = 1e-13);
    }

    #[test]
    fn fubini_indicator_kernel() {
        let m = tree(1.0, 6);
        let k = AdaptedKernel::from_fn(&m, 1, |_, _| vec![1.0]).unwrap();
        let rep = stochastic_fubini_swap(&m, &k, &[1.0; 6]).unwrap();
        assert!(rep.discrepancy < 1e-14);
        let g = m.grid();
        for leaf in 0..64 {
            let expected: f64 = (0..6)
                .map(|j| (1.0 - g.time(j) - g.dt()) * m.increment(j, leaf >> (5 - j)))
                .sum();
            assert!((rep.lhs[leaf] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn process_gamma_norm_examples() {
        let m = tree(2.0, 8);
        let l2 = SpaceSpec::euclidean(2);
        let x = AdaptedProcess::from_fn(&m, 2, |_| vec![3.0, 4.0]);
        assert_relative_eq!(gamma_norm_of_process(&m, &x, &l2, 0, 0).unwrap().value, 5.0 * 2f64.sqrt(), epsilon = 1e-13);
        assert_eq!(gamma_norm_of_process(&m, &AdaptedProcess::zeros(&m, 2), &l2, 0, 0).unwrap().value, 0.0);
        let w = AdaptedProcess::from_fn(&m, 1, |v| vec![v.w]);
        let g = m.grid();
        let discrete: f64 = (0..8).map(|i| g.time(i) * g.dt()).sum();
        let got = gamma_norm_of_process(&m, &w, &SpaceSpec::euclidean(1), 0, 0).unwrap().value;
        assert_relative_eq!(got, discrete.sqrt(), epsilon = 1e-13);
        assert_relative_eq!(time_l2_norm(&m, &w, &SpaceSpec::euclidean(1)).unwrap(), got, epsilon = 1e-13);
    }

    #[test]
    fn process_gamma_norm_lq_deterministic_matches_element() {
        // A deterministic process: every state carries the same element.
        let m = tree(1.0, 4);
        let s = SpaceSpec::new(2, 4.0, 2.0).unwrap();
        let phi = AdaptedProcess::from_fn(&m, 2, |v| vec![1.0, v.t]);
        let got = gamma_norm_of_process(&m, &phi, &s, 0, 0).unwrap().value;
        let vals: Vec<f64> = (0..4).flat_map(|i| vec![1.0, m.grid().time(i)]).collect();
        let el = FiniteRankGammaElement::from_grid_values(m.grid(), 2, &vals).unwrap();
        // Same operator with two columns: C V = U Sigma.
        let svd = el.coefficients().clone().svd(true, false);
        let u = svd.u.unwrap();
        let reduced = DMatrix::from_fn(2, 2, |r, c| u[(r, c)] * svd.singular_values[c]);
        let reduced = FiniteRankGammaElement::from_columns(reduced).unwrap();
        let reference = crate::gamma::gamma_norm_quadrature(&reduced, &s, 80).unwrap().value;
        assert_relative_eq!(got, reference, max_relative = 1e-6);
    }

    #[test]
    fn scrambling_detects_lookahead() {
        let m = StochasticModel::paths(TimeGrid::new(1.0, 6).unwrap(), 200, 4).unwrap();
        let adapted = |mm: &StochasticModel| Ok(AdaptedProcess::from_fn(mm, 1, |v| vec![v.w.sin()]));
        assert_eq!(scrambling_check(&m, 3, 11, adapted).unwrap(), 0.0);
        let peeking = |mm: &StochasticModel| {
            let n = mm.steps();
            let levels = (0..=n)
                .map(|i| (0..mm.states(i)).map(|p| mm.brownian(n, p) - mm.brownian(i, p)).collect())
                .collect();
            Ok(AdaptedProcess::from_levels(1, levels))
        };
        assert!(scrambling_check(&m, 3, 11, peeking).unwrap() > 0.0);
    }
}
