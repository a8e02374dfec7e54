use nalgebra::DMatrix;

use super::element::{FiniteRankGammaElement, HilbertFamily};
use super::kernel::KernelGammaElement;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::semigroup::SemigroupOperator;

/// A deterministic function on the grid nodes `t_0..=t_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != (grid.steps() + 1) * dim {
            return Err(Error::ShapeMismatch(format!(
                "grid function needs {} values, got {}",
                (grid.steps() + 1) * dim,
                values.len()
            )));
        }
        Ok(Self { grid, dim, values })
    }

    pub fn from_fn<F: FnMut(usize, f64) -> Vec<f64>>(grid: TimeGrid, dim: usize, mut f: F) -> Self {
        let mut values = Vec::with_capacity((grid.steps() + 1) * dim);
        for i in 0..=grid.steps() {
            let v = f(i, grid.time(i));
            assert_eq!(v.len(), dim, "grid function value has wrong dimension");
            values.extend(v);
        }
        Self { grid, dim, values }
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        Self { grid, dim, values: vec![0.0; (grid.steps() + 1) * dim] }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Embedding into `gamma(0,T; X)` through the left endpoints of the cells.
    pub fn to_gamma(&self) -> FiniteRankGammaElement {
        let n = self.grid.steps();
        FiniteRankGammaElement::from_grid_values(&self.grid, self.dim, &self.values[..n * self.dim])
            .expect("grid function has consistent shape")
    }
}

/// Extension `T~` of a Hilbert-side operator `T` (an `m x n` matrix in the
/// orthonormal coordinates of `g`): the coefficient matrix becomes
/// `coefficients(g) * T^t`.
pub fn kalton_weis_extend(
    op_matrix: &DMatrix<f64>,
    g: &FiniteRankGammaElement,
) -> Result<FiniteRankGammaElement> {
    if op_matrix.ncols() != g.rank_bound() {
        return Err(Error::ShapeMismatch(format!(
            "operator has {} columns but the element has {}",
            op_matrix.ncols(),
            g.rank_bound()
        )));
    }
    let coeffs = g.coefficients() * op_matrix.transpose();
    FiniteRankGammaElement::new(coeffs, HilbertFamily::Abstract(op_matrix.nrows()))
}

/// The functional `I_{s,t}: phi -> int_s^t phi` in cell coordinates: a
/// `1 x N` row with `sqrt(dt)` on the cells `from <= j < to`.
pub fn indefinite_integral_row(grid: &TimeGrid, from: usize, to: usize) -> DMatrix<f64> {
    let h = grid.dt().sqrt();
    DMatrix::from_fn(1, grid.steps(), |_, j| if j >= from && j < to { h } else { 0.0 })
}

/// Column `j` of the output is `M_j x_j`.
pub fn pointwise_multiply(
    multipliers: &[DMatrix<f64>],
    g: &FiniteRankGammaElement,
) -> Result<FiniteRankGammaElement> {
    if multipliers.len() != g.rank_bound() {
        return Err(Error::ShapeMismatch(format!(
            "{} multipliers for {} Hilbert cells",
            multipliers.len(),
            g.rank_bound()
        )));
    }
    let d = g.dim();
    let mut out = DMatrix::zeros(d, g.rank_bound());
    for (j, m) in multipliers.iter().enumerate() {
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::ShapeMismatch(format!(
                "multiplier {j} is {}x{}, expected {d}x{d}",
                m.nrows(),
                m.ncols()
            )));
        }
        let col = m * g.coefficients().column(j);
        out.column_mut(j).copy_from(&col);
    }
    FiniteRankGammaElement::new(out, g.family())
}

fn check_same_grid(s: &SemigroupOperator, grid: &TimeGrid, dim: usize) -> Result<()> {
    if s.grid() != grid {
        return Err(Error::ModelMismatch("semigroup cache and process use different grids".into()));
    }
    if s.dim() != dim {
        return Err(Error::DimensionMismatch { expected: s.dim(), actual: dim });
    }
    Ok(())
}

/// `(Phi g)(t_i) = sum_{j<i} S(t_i - t_j) g(t_j) dt`.
pub fn convolve_semigroup(s: &SemigroupOperator, g: &GridFunction) -> Result<GridFunction> {
    check_same_grid(s, g.grid(), g.dim())?;
    let (n, d, dt) = (g.grid().steps(), g.dim(), g.grid().dt());
    let mut out = GridFunction::zeros(*g.grid(), d);
    for i in 1..=n {
        let mut acc = vec![0.0; d];
        for j in 0..i {
            s.apply_add(i - j, dt, g.at(j), &mut acc);
        }
        out.values[i * d..(i + 1) * d].copy_from_slice(&acc);
    }
    Ok(out)
}

/// `out(sigma_j) = sum_{j<i<N} S(t_i - sigma_j) k(t_i, sigma_j) dt`, with
/// `out(sigma_N) = 0`.
pub fn convolve_kernel(s: &SemigroupOperator, k: &KernelGammaElement) -> Result<GridFunction> {
    check_same_grid(s, k.grid(), k.dim())?;
    k.check_support()?;
    let (n, d, dt) = (k.grid().steps(), k.dim(), k.grid().dt());
    let mut out = GridFunction::zeros(*k.grid(), d);
    for j in 0..n {
        let mut acc = vec![0.0; d];
        for i in (j + 1)..n {
            s.apply_add(i - j, dt, k.at(i, j), &mut acc);
        }
        out.values[j * d..(j + 1) * d].copy_from_slice(&acc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gamma::gamma_norm_hilbert_exact;
    use crate::semigroup::spectral_norm;
    use crate::space::SpaceSpec;
    use approx::assert_relative_eq;

    #[test]
    fn identity_extension_is_noop() {
        let g = FiniteRankGammaElement::from_columns(DMatrix::from_fn(2, 3, |r, c| (r + 2 * c) as f64))
            .unwrap();
        let out = kalton_weis_extend(&DMatrix::identity(3, 3), &g).unwrap();
        assert_eq!(out.coefficients(), g.coefficients());
    }

    #[test]
    fn integral_of_constant() {
        let grid = TimeGrid::new(1.5, 6).unwrap();
        let x = [2.0, -1.0];
        let f = GridFunction::from_fn(grid, 2, |_, _| x.to_vec());
        let out = kalton_weis_extend(&indefinite_integral_row(&grid, 0, 6), &f.to_gamma()).unwrap();
        assert_relative_eq!(out.coefficients()[(0, 0)], 1.5 * 2.0, epsilon = 1e-14);
        assert_relative_eq!(out.coefficients()[(1, 0)], -1.5, epsilon = 1e-14);
    }

    #[test]
    fn extension_shape_mismatch() {
        let g = FiniteRankGammaElement::from_columns(DMatrix::zeros(2, 3)).unwrap();
        assert!(kalton_weis_extend(&DMatrix::zeros(1, 4), &g).is_err());
    }

    #[test]
    fn multiplier_homogeneity() {
        let g = FiniteRankGammaElement::from_columns(DMatrix::from_fn(2, 3, |r, c| 1.0 + (r * c) as f64))
            .unwrap();
        let s = SpaceSpec::euclidean(2);
        let base = gamma_norm_hilbert_exact(&g, &s).unwrap().value;
        let ids = vec![DMatrix::identity(2, 2); 3];
        assert_eq!(pointwise_multiply(&ids, &g).unwrap(), g);
        let scaled = vec![DMatrix::identity(2, 2) * -2.5; 3];
        let out = pointwise_multiply(&scaled, &g).unwrap();
        assert_relative_eq!(gamma_norm_hilbert_exact(&out, &s).unwrap().value, 2.5 * base, epsilon = 1e-13);
        assert!(pointwise_multiply(&ids[..2], &g).is_err());
    }

    #[test]
    fn running_integral_of_constant() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let s = SemigroupOperator::identity(2, grid);
        let f = GridFunction::from_fn(grid, 2, |_, _| vec![1.0, 3.0]);
        let out = convolve_semigroup(&s, &f).unwrap();
        for i in 0..=8 {
            let t = grid.time(i);
            assert_relative_eq!(out.at(i)[0], t, epsilon = 1e-14);
            assert_relative_eq!(out.at(i)[1], 3.0 * t, epsilon = 1e-14);
        }
        let zero = convolve_semigroup(&s, &GridFunction::zeros(grid, 2)).unwrap();
        assert!(zero.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_decay_convolution_is_first_order() {
        let a = 1.3;
        let err = |n: usize| {
            let grid = TimeGrid::new(1.0, n).unwrap();
            let s = SemigroupOperator::new(DMatrix::from_element(1, 1, a), grid).unwrap();
            let out = convolve_semigroup(&s, &GridFunction::from_fn(grid, 1, |_, _| vec![1.0])).unwrap();
            (0..=n)
                .map(|i| (out.at(i)[0] - (1.0 - (-a * grid.time(i)).exp()) / a).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e2 < e1 && e1 / e2 > 1.8, "{e1} {e2}");
    }

    #[test]
    fn kernel_convolution_slice_measure() {
        let grid = TimeGrid::new(2.0, 10).unwrap();
        let s = SemigroupOperator::identity(1, grid);
        let k = KernelGammaElement::from_fn(grid, 1, true, |i, j| if j < i { vec![1.0] } else { vec![0.0] })
            .unwrap();
        let out = convolve_kernel(&s, &k).unwrap();
        // Left-endpoint sum over the cells strictly after sigma_j.
        for j in 0..10 {
            assert_relative_eq!(out.at(j)[0], grid.horizon() - grid.time(j) - grid.dt(), epsilon = 1e-13);
        }
    }

    #[test]
    fn convolution_bound_l2() {
        let grid = TimeGrid::new(1.0, 12).unwrap();
        let gen = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, -1.0, 0.2]);
        let s = SemigroupOperator::new(gen, grid).unwrap();
        let gamma_s = s.cache().iter().map(spectral_norm).fold(0.0, f64::max);
        let f = GridFunction::from_fn(grid, 2, |i, t| vec![(3.0 * t).sin(), (i as f64).cos()]);
        let out = convolve_semigroup(&s, &f).unwrap();
        let space = SpaceSpec::euclidean(2);
        let lhs = gamma_norm_hilbert_exact(&out.to_gamma(), &space).unwrap().value;
        let rhs = gamma_s * gamma_norm_hilbert_exact(&f.to_gamma(), &space).unwrap().value;
        assert!(lhs <= rhs);
    }
}
