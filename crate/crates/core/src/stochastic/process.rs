use super::model::{NodeView, StochasticModel};
use crate::error::{Error, Result};

/// A vector-valued random variable measurable at a fixed level: one value per
/// state of that level.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomVector {
    level: usize,
    dim: usize,
    values: Vec<f64>,
}

impl RandomVector {
    pub fn new(model: &StochasticModel, level: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        model.check_level(level)?;
        if values.len() != model.states(level) * dim {
            return Err(Error::ShapeMismatch(format!(
                "level {level} needs {} values, got {}",
                model.states(level) * dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { level, dim, values })
    }

    pub fn zeros(model: &StochasticModel, level: usize, dim: usize) -> Self {
        Self { level, dim, values: vec![0.0; model.states(level) * dim] }
    }

    pub fn constant(model: &StochasticModel, level: usize, x: &[f64]) -> Self {
        Self::from_fn(model, level, x.len(), |_| x.to_vec())
    }

    pub fn from_fn<F: Fn(NodeView) -> Vec<f64>>(model: &StochasticModel, level: usize, dim: usize, f: F) -> Self {
        let mut values = Vec::with_capacity(model.states(level) * dim);
        for n in 0..model.states(level) {
            let v = f(model.node_view(level, n));
            assert_eq!(v.len(), dim, "value has wrong dimension");
            values.extend(v);
        }
        Self { level, dim, values }
    }

    /// Values given per terminal state, declared measurable at `level`. On the
    /// tree every subtree below a level-`level` node must carry one value.
    pub fn from_terminal_indexed(
        model: &StochasticModel,
        level: usize,
        dim: usize,
        terminal: &[f64],
    ) -> Result<Self> {
        let n = model.steps();
        model.check_level(level)?;
        if terminal.len() != model.states(n) * dim {
            return Err(Error::ShapeMismatch(format!(
                "expected {} terminal values, got {}",
                model.states(n) * dim,
                terminal.len()
            )));
        }
        if !model.is_tree() || level == n {
            return Self::new(model, level, dim, terminal.to_vec());
        }
        let mut values = vec![0.0; model.states(level) * dim];
        for leaf in 0..model.states(n) {
            let node = model.ancestor(leaf, n, level);
            let v = &terminal[leaf * dim..(leaf + 1) * dim];
            let slot = &mut values[node * dim..(node + 1) * dim];
            if leaf == node << (n - level) {
                slot.copy_from_slice(v);
            } else if slot != v {
                return Err(Error::NotAdapted { level, node });
            }
        }
        Self::new(model, level, dim, values)
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, node: usize) -> &[f64] {
        &self.values[node * self.dim..(node + 1) * self.dim]
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    /// The same random variable seen at a later level.
    pub fn lift(&self, model: &StochasticModel, to: usize) -> Result<Self> {
        model.check_level(to)?;
        if to < self.level {
            return Err(Error::LevelOutOfRange { level: to, steps: self.level });
        }
        let d = self.dim;
        let mut values = Vec::with_capacity(model.states(to) * d);
        for m in 0..model.states(to) {
            values.extend_from_slice(self.at(model.ancestor(m, to, self.level)));
        }
        Ok(Self { level: to, dim: d, values })
    }

    /// `self + c * other`, both at the same level.
    pub fn axpy(&self, c: f64, other: &RandomVector) -> Result<Self> {
        self.check_same(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect();
        Ok(Self { level: self.level, dim: self.dim, values })
    }

    /// Largest nodewise sup-norm difference.
    pub fn max_abs_diff(&self, other: &RandomVector) -> Result<f64> {
        self.check_same(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    fn check_same(&self, other: &RandomVector) -> Result<()> {
        if self.level != other.level || self.dim != other.dim || self.values.len() != other.values.len() {
            return Err(Error::ShapeMismatch(format!(
                "random vectors at (level {}, dim {}) and (level {}, dim {})",
                self.level, self.dim, other.level, other.dim
            )));
        }
        Ok(())
    }
}

/// A process on the grid nodes `t_0..=t_N`; level `i` holds one value per
/// state of that level, which makes it adapted by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedProcess {
    dim: usize,
    levels: Vec<Vec<f64>>,
}

impl AdaptedProcess {
    pub fn zeros(model: &StochasticModel, dim: usize) -> Self {
        Self { dim, levels: (0..=model.steps()).map(|i| vec![0.0; model.states(i) * dim]).collect() }
    }

    pub fn from_fn<F: Fn(NodeView) -> Vec<f64>>(model: &StochasticModel, dim: usize, f: F) -> Self {
        let levels = (0..=model.steps())
            .map(|i| RandomVector::from_fn(model, i, dim, &f).into_values())
            .collect();
        Self { dim, levels }
    }

    /// One random vector per level, in level order.
    pub fn from_slices(model: &StochasticModel, slices: Vec<RandomVector>) -> Result<Self> {
        if slices.len() != model.steps() + 1 {
            return Err(Error::ShapeMismatch(format!(
                "expected {} slices, got {}",
                model.steps() + 1,
                slices.len()
            )));
        }
        let dim = slices[0].dim();
        let mut levels = Vec::with_capacity(slices.len());
        for (i, s) in slices.into_iter().enumerate() {
            if s.level() != i || s.dim() != dim || s.values().len() != model.states(i) * dim {
                return Err(Error::ShapeMismatch(format!("slice {i} has the wrong level or shape")));
            }
            levels.push(s.into_values());
        }
        Ok(Self { dim, levels })
    }

    pub(crate) fn from_levels(dim: usize, levels: Vec<Vec<f64>>) -> Self {
        Self { dim, levels }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, i: usize) -> &[f64] {
        &self.levels[i]
    }

    #[cfg(test)]
    pub(crate) fn level_mut(&mut self, i: usize) -> &mut Vec<f64> {
        &mut self.levels[i]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn at(&self, i: usize, node: usize) -> &[f64] {
        &self.levels[i][node * self.dim..(node + 1) * self.dim]
    }

    pub fn slice(&self, i: usize) -> RandomVector {
        RandomVector { level: i, dim: self.dim, values: self.levels[i].clone() }
    }

    pub fn is_zero(&self) -> bool {
        self.levels.iter().all(|l| l.iter().all(|v| *v == 0.0))
    }

    pub(crate) fn check_model(&self, model: &StochasticModel) -> Result<()> {
        if self.levels.len() != model.steps() + 1
            || self.levels.iter().enumerate().any(|(i, l)| l.len() != model.states(i) * self.dim)
        {
            return Err(Error::ModelMismatch("process does not live on this model".into()));
        }
        Ok(())
    }

    /// Largest nodewise sup-norm difference over all levels.
    pub fn max_abs_diff(&self, other: &AdaptedProcess) -> Result<f64> {
        if self.dim != other.dim || self.levels.len() != other.levels.len() {
            return Err(Error::ShapeMismatch("processes of different shapes".into()));
        }
        Ok(self
            .levels
            .iter()
            .zip(&other.levels)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max))
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &AdaptedProcess) -> Result<Self> {
        if self.dim != other.dim || self.levels.len() != other.levels.len() {
            return Err(Error::ShapeMismatch("processes of different shapes".into()));
        }
        let levels = self
            .levels
            .iter()
            .zip(&other.levels)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + c * y).collect())
            .collect();
        Ok(Self { dim: self.dim, levels })
    }
}

/// A two-parameter process `k(t_i, sigma_j)`: slice `i` is an adapted process
/// in `sigma`, supported on `sigma_j < t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedKernel {
    dim: usize,
    slices: Vec<AdaptedProcess>,
}

impl AdaptedKernel {
    /// `slices[i]` is `k(t_i, .)` for `i = 0..N`. Fails on a non-zero value
    /// with `sigma >= s`.
    pub fn new(model: &StochasticModel, dim: usize, slices: Vec<AdaptedProcess>) -> Result<Self> {
        if slices.len() != model.steps() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} kernel slices, got {}",
                model.steps(),
                slices.len()
            )));
        }
        for (i, s) in slices.iter().enumerate() {
            s.check_model(model)?;
            if s.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: s.dim() });
            }
            for j in i..=model.steps() {
                if s.level(j).iter().any(|v| *v != 0.0) {
                    return Err(Error::SupportViolation { s: i, sigma: j });
                }
            }
        }
        Ok(Self { dim, slices })
    }

    pub fn from_fn<F: Fn(usize, NodeView) -> Vec<f64>>(model: &StochasticModel, dim: usize, f: F) -> Result<Self> {
        let slices = (0..model.steps())
            .map(|i| {
                AdaptedProcess::from_fn(model, dim, |v| if v.level < i { f(i, v) } else { vec![0.0; dim] })
            })
            .collect();
        Self::new(model, dim, slices)
    }

    pub(crate) fn from_slices_unchecked(dim: usize, slices: Vec<AdaptedProcess>) -> Self {
        Self { dim, slices }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn slices(&self) -> &[AdaptedProcess] {
        &self.slices
    }

    pub fn slice(&self, i: usize) -> &AdaptedProcess {
        &self.slices[i]
    }

    /// `k(t_i, sigma_j)` at a level-`j` state.
    pub fn at(&self, i: usize, j: usize, node: usize) -> &[f64] {
        self.slices[i].at(j, node)
    }

    pub fn max_abs_diff(&self, other: &AdaptedKernel) -> Result<f64> {
        if self.slices.len() != other.slices.len() {
            return Err(Error::ShapeMismatch("kernels of different shapes".into()));
        }
        let mut worst = 0.0f64;
        for (a, b) in self.slices.iter().zip(&other.slices) {
            worst = worst.max(a.max_abs_diff(b)?);
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;

    fn tree(n: usize) -> StochasticModel {
        StochasticModel::tree(TimeGrid::new(1.0, n).unwrap()).unwrap()
    }

    #[test]
    fn terminal_indexed_checks_measurability() {
        let m = tree(4);
        let adapted: Vec<f64> = (0..16).map(|leaf| m.brownian(2, leaf >> 2)).collect();
        let rv = RandomVector::from_terminal_indexed(&m, 2, 1, &adapted).unwrap();
        assert_eq!(rv.values().len(), 4);
        let full: Vec<f64> = (0..16).map(|leaf| m.brownian(4, leaf)).collect();
        assert!(matches!(
            RandomVector::from_terminal_indexed(&m, 2, 1, &full),
            Err(Error::NotAdapted { level: 2, .. })
        ));
    }

    #[test]
    fn lift_follows_ancestors() {
        let m = tree(3);
        let w1 = RandomVector::from_fn(&m, 1, 1, |v| vec![v.w]);
        let l = w1.lift(&m, 3).unwrap();
        for leaf in 0..8 {
            assert_eq!(l.at(leaf)[0], m.brownian(1, leaf >> 2));
        }
        assert!(w1.lift(&m, 0).is_err());
    }

    #[test]
    fn kernel_support() {
        let m = tree(3);
        let ok = AdaptedKernel::from_fn(&m, 1, |_, v| vec![v.w]).unwrap();
        assert_eq!(ok.at(2, 2, 1), &[0.0]);
        let mut bad = ok.slices().to_vec();
        bad[1] = AdaptedProcess::from_fn(&m, 1, |_| vec![1.0]);
        assert!(matches!(AdaptedKernel::new(&m, 1, bad), Err(Error::SupportViolation { s: 1, sigma: 1 })));
    }
}
