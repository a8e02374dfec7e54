use nalgebra::DMatrix;

use super::element::{
    gamma_norm_hilbert_exact, FiniteRankGammaElement, GammaMethod, GammaNormEstimate, HilbertFamily,
};
use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::rng::{self, block_moments};
use crate::space::{norm_q, SpaceSpec};

/// Deterministic two-time element `k(s_i, sigma_j)` of
/// `gamma(0,T; gamma(0,T; X))`, one vector per product cell.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGammaElement {
    grid: TimeGrid,
    dim: usize,
    values: Vec<f64>,
    lower_triangular: bool,
}

impl KernelGammaElement {
    /// `values` is indexed `((i * N) + j) * dim` for `s = t_i`, `sigma = t_j`.
    /// With `lower_triangular` set, every value with `j >= i` must vanish.
    pub fn new(grid: TimeGrid, dim: usize, values: Vec<f64>, lower_triangular: bool) -> Result<Self> {
        let n = grid.steps();
        if values.len() != n * n * dim {
            return Err(Error::ShapeMismatch(format!(
                "kernel needs {} values, got {}",
                n * n * dim,
                values.len()
            )));
        }
        let k = Self { grid, dim, values, lower_triangular };
        if lower_triangular {
            k.check_support()?;
        }
        Ok(k)
    }

    pub fn from_fn<F: FnMut(usize, usize) -> Vec<f64>>(
        grid: TimeGrid,
        dim: usize,
        lower_triangular: bool,
        mut f: F,
    ) -> Result<Self> {
        let n = grid.steps();
        let mut values = Vec::with_capacity(n * n * dim);
        for i in 0..n {
            for j in 0..n {
                let v = f(i, j);
                if v.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, actual: v.len() });
                }
                values.extend(v);
            }
        }
        Self::new(grid, dim, values, lower_triangular)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_lower_triangular(&self) -> bool {
        self.lower_triangular
    }

    pub fn at(&self, i: usize, j: usize) -> &[f64] {
        let n = self.grid.steps();
        let o = (i * n + j) * self.dim;
        &self.values[o..o + self.dim]
    }

    /// Fails on the first non-zero value with `sigma >= s`.
    pub fn check_support(&self) -> Result<()> {
        let n = self.grid.steps();
        for i in 0..n {
            for j in i..n {
                if self.at(i, j).iter().any(|v| *v != 0.0) {
                    return Err(Error::SupportViolation { s: i, sigma: j });
                }
            }
        }
        Ok(())
    }
}

/// Reinterpret `k` as one element over the product grid; column `(i, j)` is
/// `dt * k(t_i, t_j)` (the product of the two cell normalisations).
pub fn nest_flatten(k: &KernelGammaElement) -> FiniteRankGammaElement {
    let n = k.grid.steps();
    let dt = k.grid.dt();
    let coeffs = DMatrix::from_fn(k.dim, n * n, |r, c| dt * k.values[c * k.dim + r]);
    FiniteRankGammaElement::new(coeffs, HilbertFamily::ProductCells { cells: n, horizon: k.grid.horizon() })
        .expect("product family has n^2 cells")
}

/// Norm of `k` in `gamma(0,T; gamma(0,T; X))`,
/// `(E' E'' ||sum_i sum_j g'_i g''_j dt k_ij||^2)^(1/2)` with independent
/// Gaussian sequences; the Frobenius value when the state norm is Euclidean.
pub fn nested_gamma_norm(
    k: &KernelGammaElement,
    space: &SpaceSpec,
    samples: usize,
    seed: u64,
) -> Result<GammaNormEstimate> {
    space.check_len(k.dim)?;
    if space.is_hilbert() {
        return gamma_norm_hilbert_exact(&nest_flatten(k), space);
    }
    if samples < 2 {
        return Err(invalid("samples", "at least two Monte-Carlo samples are required"));
    }
    let (n, d, dt, q) = (k.grid.steps(), k.dim, k.grid.dt(), space.norm_exponent());
    let m = block_moments(samples, seed, |r| {
        let mut g1 = vec![0.0; n];
        let mut g2 = vec![0.0; n];
        rng::fill_normal(r, &mut g1);
        rng::fill_normal(r, &mut g2);
        let mut y = vec![0.0; d];
        for i in 0..n {
            for j in 0..n {
                let c = g1[i] * g2[j] * dt;
                for (yy, v) in y.iter_mut().zip(k.at(i, j)) {
                    *yy += c * v;
                }
            }
        }
        norm_q(&y, q).powi(2)
    });
    let mean = m.mean();
    let value = mean.sqrt();
    let std_error = if mean > 0.0 { m.std_error() / (2.0 * value) } else { 0.0 };
    Ok(GammaNormEstimate { value, std_error, samples, method: GammaMethod::MonteCarlo })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid() -> TimeGrid {
        TimeGrid::new(1.0, 6).unwrap()
    }

    #[test]
    fn support_is_enforced() {
        let bad = KernelGammaElement::from_fn(grid(), 1, true, |i, j| vec![if i == j { 1.0 } else { 0.0 }]);
        assert!(matches!(bad, Err(Error::SupportViolation { s: 0, sigma: 0 })));
        let ok = KernelGammaElement::from_fn(grid(), 1, false, |i, j| vec![if i == j { 1.0 } else { 0.0 }]);
        assert!(ok.is_ok());
    }

    #[test]
    fn flattened_equals_nested_in_l2() {
        let s = SpaceSpec::euclidean(2);
        let zero = KernelGammaElement::from_fn(grid(), 2, true, |_, _| vec![0.0, 0.0]).unwrap();
        assert_eq!(nested_gamma_norm(&zero, &s, 10, 0).unwrap().value, 0.0);
        let rank_one =
            KernelGammaElement::from_fn(grid(), 2, true, |i, j| if j < i { vec![1.0, -2.0] } else { vec![0.0; 2] })
                .unwrap();
        let flat = gamma_norm_hilbert_exact(&nest_flatten(&rank_one), &s).unwrap().value;
        // 15 cells below the diagonal, each of weight dt^2 * 5
        assert_relative_eq!(flat, (15.0f64 * 5.0 / 36.0).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn nested_mc_is_consistent_in_l2() {
        // Run the Monte-Carlo branch on an l^2 problem by hand and compare with Frobenius.
        let k = KernelGammaElement::from_fn(grid(), 2, true, |i, j| {
            if j < i { vec![(i + j) as f64 * 0.1, 1.0 - j as f64 * 0.2] } else { vec![0.0; 2] }
        })
        .unwrap();
        let l2 = SpaceSpec::euclidean(2);
        let exact = nested_gamma_norm(&k, &l2, 0, 0).unwrap().value;
        let near_l2 = SpaceSpec::new(2, 2.0 + 1e-12, 2.0).unwrap();
        let mc = nested_gamma_norm(&k, &near_l2, 40_000, 5).unwrap();
        assert!((mc.value - exact).abs() <= 3.0 * mc.std_error + 1e-9, "{} vs {}", mc.value, exact);
    }
}
