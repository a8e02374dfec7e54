use nalgebra::{Cholesky, DMatrix, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::rng;

/// Largest tree depth the engine will allocate.
pub const MAX_TREE_DEPTH: usize = 24;

/// Largest relative misfit for which per-path values count as an exact
/// polynomial in `W(t_level)`.
pub(crate) const EXPANSION_TOL: f64 = 1e-10;

/// Ridge parameter of the path-model regressions.
pub const RIDGE_LAMBDA: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Tree,
    Paths,
}

/// What a process value at one node can see: its level, time and the
/// Brownian value there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeView {
    pub level: usize,
    pub t: f64,
    pub w: f64,
}

#[derive(Debug, Clone)]
struct PathData {
    count: usize,
    seed: u64,
    degree: usize,
    /// `dw[p * N + i]` is `W(t_{i+1}) - W(t_i)` on path `p`.
    dw: Vec<f64>,
    /// `w[p * (N + 1) + i]` is `W(t_i)` on path `p`.
    w: Vec<f64>,
    /// Cholesky factor of the ridge Gram matrix of the basis, per level.
    gram: Vec<Cholesky<f64, Dyn>>,
}

/// The Brownian driver and its filtration: an exact binary tree or a seeded
/// Gaussian path ensemble.
///
/// Tree nodes at level `i` are the integers `0..2^i`; the children of `n` are
/// `2n` (down-step) and `2n + 1` (up-step), so the level-`i` ancestor of a
/// level-`j` node `m` is `m >> (j - i)`.
#[derive(Debug, Clone)]
pub struct StochasticModel {
    grid: TimeGrid,
    paths: Option<PathData>,
}

impl StochasticModel {
    pub fn tree(grid: TimeGrid) -> Result<Self> {
        if grid.steps() > MAX_TREE_DEPTH {
            return Err(Error::TreeTooDeep(grid.steps()));
        }
        Ok(Self { grid, paths: None })
    }

    /// Gaussian ensemble with the default cubic regression basis.
    pub fn paths(grid: TimeGrid, count: usize, seed: u64) -> Result<Self> {
        Self::paths_with_degree(grid, count, seed, 3)
    }

    pub fn paths_with_degree(grid: TimeGrid, count: usize, seed: u64, degree: usize) -> Result<Self> {
        if count < 2 {
            return Err(invalid("path_count", "at least two paths are required"));
        }
        let n = grid.steps();
        let h = grid.dt().sqrt();
        let mut dw = vec![0.0; count * n];
        dw.par_chunks_mut(n).enumerate().for_each(|(p, row)| {
            let mut r = rng::stream(seed, p as u64);
            rng::fill_normal(&mut r, row);
            row.iter_mut().for_each(|x| *x *= h);
        });
        Self::from_increments(grid, count, seed, degree, dw)
    }

    fn from_increments(grid: TimeGrid, count: usize, seed: u64, degree: usize, dw: Vec<f64>) -> Result<Self> {
        let n = grid.steps();
        let mut w = vec![0.0; count * (n + 1)];
        w.par_chunks_mut(n + 1).zip(dw.par_chunks(n)).for_each(|(wr, dr)| {
            for i in 0..n {
                wr[i + 1] = wr[i] + dr[i];
            }
        });
        let mut data = PathData { count, seed, degree, dw, w, gram: Vec::new() };
        let gram = (0..=n)
            .map(|i| {
                let k = basis_size(i, degree);
                let mut g = DMatrix::zeros(k, k);
                let mut b = vec![0.0; k];
                for p in 0..count {
                    basis(&grid, i, data.w[p * (n + 1) + i], degree, &mut b);
                    for r in 0..k {
                        for c in 0..k {
                            g[(r, c)] += b[r] * b[c];
                        }
                    }
                }
                g /= count as f64;
                for r in 0..k {
                    g[(r, r)] += RIDGE_LAMBDA;
                }
                g.cholesky()
                    .ok_or_else(|| invalid("path_count", "regression basis is degenerate"))
            })
            .collect::<Result<Vec<_>>>()?;
        data.gram = gram;
        Ok(Self { grid, paths: Some(data) })
    }

    /// Copy of a path model whose increments with index `>= level` (those
    /// after `t_level`) are redrawn from an independent stream.
    pub fn with_resampled_tail(&self, level: usize, seed: u64) -> Result<Self> {
        let p = self.paths.as_ref().ok_or(Error::ModelMismatch("tail resampling needs a path model".into()))?;
        let n = self.grid.steps();
        self.check_level(level)?;
        let mut dw = p.dw.clone();
        let h = self.grid.dt().sqrt();
        let tail_seed = rng::derive_seed(seed, 0x7a11);
        dw.par_chunks_mut(n).enumerate().for_each(|(path, row)| {
            let mut r = rng::stream(tail_seed, path as u64);
            for x in row[level..].iter_mut() {
                *x = h * rng::normal(&mut r);
            }
        });
        Self::from_increments(self.grid, p.count, p.seed, p.degree, dw)
    }

    pub fn kind(&self) -> ModelKind {
        if self.paths.is_some() { ModelKind::Paths } else { ModelKind::Tree }
    }

    pub fn is_tree(&self) -> bool {
        self.paths.is_none()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn seed(&self) -> Option<u64> {
        self.paths.as_ref().map(|p| p.seed)
    }

    pub fn path_count(&self) -> Option<usize> {
        self.paths.as_ref().map(|p| p.count)
    }

    /// Number of distinguishable states at `level`: `2^level` on the tree,
    /// the path count otherwise.
    pub fn states(&self, level: usize) -> usize {
        match &self.paths {
            None => 1 << level,
            Some(p) => p.count,
        }
    }

    /// Probability weight of one state at `level`.
    pub fn weight(&self, level: usize) -> f64 {
        match &self.paths {
            None => (-(level as f64)).exp2(),
            Some(p) => 1.0 / p.count as f64,
        }
    }

    pub(crate) fn check_level(&self, level: usize) -> Result<()> {
        if level > self.steps() {
            return Err(Error::LevelOutOfRange { level, steps: self.steps() });
        }
        Ok(())
    }

    /// Index at `level` of the state that `node` (at `from`) passes through.
    #[inline]
    pub fn ancestor(&self, node: usize, from: usize, level: usize) -> usize {
        debug_assert!(level <= from);
        if self.paths.is_none() { node >> (from - level) } else { node }
    }

    /// `W(t_{level+1}) - W(t_level)` seen from a state at `level + 1` (tree)
    /// or on a path.
    #[inline]
    pub fn increment(&self, level: usize, node: usize) -> f64 {
        match &self.paths {
            None => {
                let h = self.grid.dt().sqrt();
                if node & 1 == 1 { h } else { -h }
            }
            Some(p) => p.dw[node * self.steps() + level],
        }
    }

    /// `W(t_level)` at a state of that level.
    #[inline]
    pub fn brownian(&self, level: usize, node: usize) -> f64 {
        match &self.paths {
            None => self.grid.dt().sqrt() * (2.0 * node.count_ones() as f64 - level as f64),
            Some(p) => p.w[node * (self.steps() + 1) + level],
        }
    }

    pub fn node_view(&self, level: usize, node: usize) -> NodeView {
        NodeView { level, t: self.grid.time(level), w: self.brownian(level, node) }
    }

    /// Sanity report on the increments: exact moments on the tree, the
    /// `5 sigma / sqrt(M)` bound on the sample means for paths.
    pub fn increment_check(&self) -> IncrementCheck {
        let dt = self.grid.dt();
        match &self.paths {
            None => {
                let (up, down) = (self.increment(0, 1), self.increment(0, 0));
                let mean = 0.5 * (up + down);
                let var = 0.5 * (up * up + down * down);
                IncrementCheck {
                    max_mean_deviation: mean.abs(),
                    threshold: 0.0,
                    max_variance_defect: (var - dt).abs(),
                    passed: mean == 0.0 && (var - dt).abs() <= 1e-15,
                }
            }
            Some(p) => {
                let n = self.steps();
                let threshold = 5.0 * dt.sqrt() / (p.count as f64).sqrt();
                let mut worst = 0.0f64;
                for i in 0..n {
                    let mean = (0..p.count).map(|k| p.dw[k * n + i]).sum::<f64>() / p.count as f64;
                    worst = worst.max(mean.abs());
                }
                IncrementCheck {
                    max_mean_deviation: worst,
                    threshold,
                    max_variance_defect: f64::NAN,
                    passed: worst <= threshold,
                }
            }
        }
    }

    /// Least-squares projection of per-path values (`dim` per path) onto the
    /// polynomial basis in `W(t_level)`.
    pub(crate) fn regress(&self, values: &[f64], dim: usize, level: usize) -> Vec<f64> {
        let coef = self.regression_coefficients(values, dim, level);
        self.fitted(&coef, level)
    }

    /// Basis coefficients (`basis x dim`) of the projection behind [`Self::regress`].
    pub(crate) fn regression_coefficients(&self, values: &[f64], dim: usize, level: usize) -> DMatrix<f64> {
        let p = self.paths.as_ref().expect("regression needs a path model");
        let n1 = self.steps() + 1;
        let k = basis_size(level, p.degree);
        let mut rhs = DMatrix::zeros(k, dim);
        let mut b = vec![0.0; k];
        for path in 0..p.count {
            basis(&self.grid, level, p.w[path * n1 + level], p.degree, &mut b);
            let v = &values[path * dim..(path + 1) * dim];
            for r in 0..k {
                for c in 0..dim {
                    rhs[(r, c)] += b[r] * v[c];
                }
            }
        }
        rhs /= p.count as f64;
        p.gram[level].solve(&rhs)
    }

    pub(crate) fn fitted(&self, coef: &DMatrix<f64>, level: usize) -> Vec<f64> {
        let p = self.paths.as_ref().expect("regression needs a path model");
        let n1 = self.steps() + 1;
        let (k, dim) = coef.shape();
        let mut b = vec![0.0; k];
        let mut out = vec![0.0; p.count * dim];
        for path in 0..p.count {
            basis(&self.grid, level, p.w[path * n1 + level], p.degree, &mut b);
            for c in 0..dim {
                out[path * dim + c] = (0..k).map(|r| b[r] * coef[(r, c)]).sum();
            }
        }
        out
    }

    /// Coefficients of `values` in the level basis when the values are a
    /// polynomial of the basis degree in `W(t_level)` to rounding; `None`
    /// otherwise. Iterative refinement removes the ridge bias.
    pub(crate) fn exact_expansion(&self, values: &[f64], dim: usize, level: usize) -> Option<DMatrix<f64>> {
        let p = self.paths.as_ref().expect("needs a path model");
        let mut coef = self.regression_coefficients(values, dim, level);
        for _ in 0..3 {
            let fit = self.fitted(&coef, level);
            let resid: Vec<f64> = values.iter().zip(&fit).map(|(a, b)| a - b).collect();
            coef += self.regression_coefficients(&resid, dim, level);
        }
        let fit = self.fitted(&coef, level);
        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let worst = values.iter().zip(&fit).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        debug_assert_eq!(values.len(), p.count * dim);
        (worst <= EXPANSION_TOL * scale).then_some(coef)
    }

    /// Level-`to` coefficients of `E(g(W(t_from)) | W(t_to))` for the
    /// level-`from` expansion `g`, from Gaussian moments of
    /// `W(t_from) - W(t_to)`.
    pub(crate) fn propagate_expansion(&self, coef: &DMatrix<f64>, from: usize, to: usize) -> DMatrix<f64> {
        let p = self.paths.as_ref().expect("needs a path model");
        if from == to {
            return coef.clone();
        }
        let (k, dim) = coef.shape();
        let tau = self.grid.time(from) - self.grid.time(to);
        let mut moments = vec![0.0; k];
        moments[0] = 1.0;
        for j in (2..k).step_by(2) {
            moments[j] = moments[j - 2] * (j - 1) as f64 * tau;
        }
        let s_from = self.grid.time(from).sqrt();
        let s_to = self.grid.time(to).sqrt();
        let k_to = basis_size(to, p.degree);
        let mut out = DMatrix::zeros(k_to, dim);
        // (w + X)^d / s_from^d = sum_r C(d, r) w^r E X^(d-r) / s_from^d, w = s_to z
        for d in 0..k {
            let mut binom = 1.0;
            for r in 0..=d {
                if r < k_to {
                    let factor = binom * moments[d - r] * s_to.powi(r as i32) / s_from.powi(d as i32);
                    for c in 0..dim {
                        out[(r, c)] += factor * coef[(d, c)];
                    }
                }
                binom = binom * (d - r) as f64 / (r + 1) as f64;
            }
        }
        out
    }

    /// `E(g(W(t_{level+1})) dW_{level+1} | W(t_level)) / dt` for the basis
    /// expansion `g` with coefficients `coef` at `level + 1`, evaluated in
    /// closed form from Gaussian moments of the increment.
    pub(crate) fn integrand_of_expansion(&self, coef: &DMatrix<f64>, level: usize) -> Vec<f64> {
        let p = self.paths.as_ref().expect("needs a path model");
        let n1 = self.steps() + 1;
        let (k, dim) = coef.shape();
        let dt = self.grid.dt();
        let scale = 1.0 / self.grid.time(level + 1).sqrt();
        // moments[j] = E X^j, X ~ N(0, dt)
        let mut moments = vec![0.0; k + 1];
        moments[0] = 1.0;
        for j in (2..=k).step_by(2) {
            moments[j] = moments[j - 2] * (j - 1) as f64 * dt;
        }
        let mut per_degree = vec![0.0; k];
        let mut out = vec![0.0; p.count * dim];
        for path in 0..p.count {
            let w = p.w[path * n1 + level];
            // per_degree[d] = E((w + X)^d X) scale^d / dt
            for (d, slot) in per_degree.iter_mut().enumerate() {
                let mut acc = 0.0;
                let mut binom = 1.0;
                for j in 0..=d {
                    acc += binom * w.powi((d - j) as i32) * moments[j + 1];
                    binom = binom * (d - j) as f64 / (j + 1) as f64;
                }
                *slot = acc * scale.powi(d as i32) / dt;
            }
            for c in 0..dim {
                out[path * dim + c] = (0..k).map(|r| per_degree[r] * coef[(r, c)]).sum();
            }
        }
        out
    }
}

/// Result of [`StochasticModel::increment_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IncrementCheck {
    pub max_mean_deviation: f64,
    pub threshold: f64,
    pub max_variance_defect: f64,
    pub passed: bool,
}

fn basis_size(level: usize, degree: usize) -> usize {
    if level == 0 { 1 } else { degree + 1 }
}

/// Monomials in the standardised value `W(t_level) / sqrt(t_level)`; only the
/// constant at `t = 0`.
fn basis(grid: &TimeGrid, level: usize, w: f64, degree: usize, out: &mut [f64]) {
    out[0] = 1.0;
    if level == 0 {
        return;
    }
    let z = w / grid.time(level).sqrt();
    for k in 1..=degree {
        out[k] = out[k - 1] * z;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_brownian_matches_increments() {
        let m = StochasticModel::tree(TimeGrid::new(2.0, 6).unwrap()).unwrap();
        for leaf in 0..64 {
            let mut w = 0.0;
            for i in 0..6 {
                w += m.increment(i, m.ancestor(leaf, 6, i + 1));
                assert!((w - m.brownian(i + 1, m.ancestor(leaf, 6, i + 1))).abs() < 1e-14);
            }
        }
        assert!(m.increment_check().passed);
        assert_eq!(m.states(6), 64);
    }

    #[test]
    fn depth_guard() {
        assert!(matches!(
            StochasticModel::tree(TimeGrid::new(1.0, 25).unwrap()),
            Err(Error::TreeTooDeep(25))
        ));
    }

    #[test]
    fn paths_are_seeded() {
        let g = TimeGrid::new(1.0, 8).unwrap();
        let a = StochasticModel::paths(g, 3000, 7).unwrap();
        let b = StochasticModel::paths(g, 3000, 7).unwrap();
        let c = StochasticModel::paths(g, 3000, 8).unwrap();
        assert_eq!(a.brownian(8, 17), b.brownian(8, 17));
        assert_ne!(a.brownian(8, 17), c.brownian(8, 17));
        assert!(a.increment_check().passed);
    }

    #[test]
    fn resampled_tail_keeps_the_past() {
        let g = TimeGrid::new(1.0, 8).unwrap();
        let a = StochasticModel::paths(g, 100, 1).unwrap();
        let b = a.with_resampled_tail(3, 99).unwrap();
        for p in 0..100 {
            assert_eq!(a.brownian(3, p), b.brownian(3, p));
            assert_ne!(a.brownian(4, p), b.brownian(4, p));
        }
    }

    #[test]
    fn regression_reproduces_basis_functions() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let m = StochasticModel::paths(g, 5000, 3).unwrap();
        let vals: Vec<f64> = (0..5000).map(|p| 1.0 + m.brownian(2, p).powi(2)).collect();
        let fit = m.regress(&vals, 1, 2);
        let worst = vals.iter().zip(&fit).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn polynomial_expansions_propagate_exactly() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let m = StochasticModel::paths(g, 4000, 11).unwrap();
        let cube: Vec<f64> = (0..4000).map(|p| m.brownian(4, p).powi(3) - 2.0 * m.brownian(4, p)).collect();
        let top = m.exact_expansion(&cube, 1, 4).expect("cubic lies in the basis");
        for to in 0..4 {
            let fit = m.fitted(&m.propagate_expansion(&top, 4, to), to);
            let tau = 1.0 - g.time(to);
            for p in 0..4000 {
                let w = m.brownian(to, p);
                let exact = w.powi(3) + 3.0 * w * tau - 2.0 * w;
                assert!((fit[p] - exact).abs() < 1e-9, "{to} {p} {} {exact}", fit[p]);
            }
        }
        let kinked: Vec<f64> = (0..4000).map(|p| m.brownian(4, p).max(0.0)).collect();
        assert!(m.exact_expansion(&kinked, 1, 4).is_none());
    }

    #[test]
    fn integrand_of_expansion_matches_derivative() {
        // E(g(w + X) X) / dt = E g'(w + X) for Gaussian X: for g = W^2 this is 2w.
        let g = TimeGrid::new(1.0, 4).unwrap();
        let m = StochasticModel::paths(g, 1000, 2).unwrap();
        let sq: Vec<f64> = (0..1000).map(|p| m.brownian(3, p).powi(2)).collect();
        let coef = m.exact_expansion(&sq, 1, 3).unwrap();
        let v = m.integrand_of_expansion(&coef, 2);
        for p in 0..1000 {
            assert!((v[p] - 2.0 * m.brownian(2, p)).abs() < 1e-9);
        }
    }
}
