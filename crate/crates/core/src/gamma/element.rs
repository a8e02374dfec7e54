use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::quadrature::{chi_moment, sphere_average};
use crate::rng::{self, block_moments};
use crate::space::{norm_q, SpaceSpec};

/// The orthonormal family `{h_j}` a coefficient matrix is paired with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HilbertFamily {
    /// Normalised indicators `1_(t_j, t_j+1) / sqrt(dt)` of the cells of a grid.
    TimeCells { cells: usize, horizon: f64 },
    /// Normalised indicators of the cells of the product grid `(0,T)^2`,
    /// enumerated row-major in `(s, sigma)`.
    ProductCells { cells: usize, horizon: f64 },
    /// Some orthonormal family of the given size.
    Abstract(usize),
}

impl HilbertFamily {
    pub fn size(&self) -> usize {
        match *self {
            HilbertFamily::TimeCells { cells, .. } => cells,
            HilbertFamily::ProductCells { cells, .. } => cells * cells,
            HilbertFamily::Abstract(n) => n,
        }
    }
}

/// `sum_j h_j (x) x_j`: column `j` of `coefficients` is `x_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteRankGammaElement {
    coefficients: DMatrix<f64>,
    family: HilbertFamily,
}

impl FiniteRankGammaElement {
    pub fn new(coefficients: DMatrix<f64>, family: HilbertFamily) -> Result<Self> {
        if coefficients.ncols() > family.size() {
            return Err(Error::ShapeMismatch(format!(
                "{} columns exceed the Hilbert family size {}",
                coefficients.ncols(),
                family.size()
            )));
        }
        if coefficients.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { coefficients, family })
    }

    /// Element of an abstract `n`-dimensional Hilbert space.
    pub fn from_columns(coefficients: DMatrix<f64>) -> Result<Self> {
        let n = coefficients.ncols();
        Self::new(coefficients, HilbertFamily::Abstract(n))
    }

    /// Embeds grid values `phi(t_j)`, `j = 0..N-1` (left endpoints), as the
    /// columns `sqrt(dt) phi(t_j)`.
    pub fn from_grid_values(grid: &TimeGrid, dim: usize, values: &[f64]) -> Result<Self> {
        let n = grid.steps();
        if values.len() != n * dim {
            return Err(Error::ShapeMismatch(format!(
                "expected {} grid values of dimension {dim}, got {} entries",
                n,
                values.len()
            )));
        }
        let h = grid.dt().sqrt();
        let coefficients = DMatrix::from_fn(dim, n, |r, c| h * values[c * dim + r]);
        Self::new(coefficients, HilbertFamily::TimeCells { cells: n, horizon: grid.horizon() })
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn family(&self) -> HilbertFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn rank_bound(&self) -> usize {
        self.coefficients.ncols()
    }

    /// `||sum_j g_j x_j||_q` for a given Gaussian draw `g`.
    fn gaussian_sum_norm(&self, g: &[f64], q: f64, buf: &mut [f64]) -> f64 {
        buf.iter_mut().for_each(|b| *b = 0.0);
        for (j, gj) in g.iter().enumerate() {
            let col = self.coefficients.column(j);
            for (b, x) in buf.iter_mut().zip(col.iter()) {
                *b += gj * x;
            }
        }
        norm_q(buf, q)
    }

    fn check_space(&self, space: &SpaceSpec) -> Result<()> {
        space.check_len(self.dim())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMethod {
    HilbertExact,
    MonteCarlo,
    Quadrature,
}

/// A gamma-norm value; `std_error` is zero exactly for the deterministic
/// methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaNormEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub method: GammaMethod,
}

impl GammaNormEstimate {
    pub(crate) fn exact(value: f64, method: GammaMethod) -> Self {
        Self { value, std_error: 0.0, samples: 0, method }
    }
}

/// Hilbert-Schmidt (Frobenius) norm; valid only for the Euclidean state norm.
pub fn gamma_norm_hilbert_exact(
    g: &FiniteRankGammaElement,
    space: &SpaceSpec,
) -> Result<GammaNormEstimate> {
    g.check_space(space)?;
    if !space.is_hilbert() {
        return Err(Error::NotHilbert(space.norm_exponent()));
    }
    Ok(GammaNormEstimate::exact(g.coefficients.norm(), GammaMethod::HilbertExact))
}

/// Monte-Carlo estimate of `(E ||sum_j gamma_j x_j||^2)^(1/2)`.
pub fn gamma_norm_mc(
    g: &FiniteRankGammaElement,
    space: &SpaceSpec,
    samples: usize,
    seed: u64,
) -> Result<GammaNormEstimate> {
    gamma_p_norm(g, space, 2.0, samples, seed)
}

/// Monte-Carlo estimate of the `gamma^p` norm `(E ||sum_j gamma_j x_j||^p)^(1/p)`.
/// The standard error is the delta-method error of the `1/p` power.
pub fn gamma_p_norm(
    g: &FiniteRankGammaElement,
    space: &SpaceSpec,
    moment: f64,
    samples: usize,
    seed: u64,
) -> Result<GammaNormEstimate> {
    g.check_space(space)?;
    if samples < 2 {
        return Err(invalid("samples", "at least two Monte-Carlo samples are required"));
    }
    if !(moment.is_finite() && moment >= 1.0) {
        return Err(invalid("moment", format!("must be >= 1, got {moment}")));
    }
    let n = g.rank_bound();
    let (d, q) = (g.dim(), space.norm_exponent());
    let m = block_moments(samples, seed, |rng| {
        let mut gauss = vec![0.0; n];
        let mut buf = vec![0.0; d];
        rng::fill_normal(rng, &mut gauss);
        g.gaussian_sum_norm(&gauss, q, &mut buf).powf(moment)
    });
    let mean = m.mean();
    let value = mean.powf(1.0 / moment);
    let std_error =
        if mean > 0.0 { m.std_error() * value / (moment * mean) } else { 0.0 };
    Ok(GammaNormEstimate { value, std_error, samples, method: GammaMethod::MonteCarlo })
}

/// Deterministic evaluation of `(E ||sum_j gamma_j x_j||^2)^(1/2)` for at
/// most three columns (radial chi moment times a spherical product rule).
pub fn gamma_norm_quadrature(
    g: &FiniteRankGammaElement,
    space: &SpaceSpec,
    nodes_per_dim: usize,
) -> Result<GammaNormEstimate> {
    Ok(GammaNormEstimate::exact(
        gaussian_moment_quadrature(g, space, 2.0, nodes_per_dim)?.sqrt(),
        GammaMethod::Quadrature,
    ))
}

/// `E ||sum_j gamma_j x_j||^r` by quadrature.
pub(crate) fn gaussian_moment_quadrature(
    g: &FiniteRankGammaElement,
    space: &SpaceSpec,
    r: f64,
    nodes_per_dim: usize,
) -> Result<f64> {
    g.check_space(space)?;
    let n = g.rank_bound();
    if n > 3 {
        return Err(Error::TooManyColumns(n));
    }
    if nodes_per_dim < 20 {
        return Err(invalid("nodes_per_dim", format!("must be >= 20, got {nodes_per_dim}")));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let q = space.norm_exponent();
    let mut buf = vec![0.0; g.dim()];
    let avg = sphere_average(n, nodes_per_dim, |u| g.gaussian_sum_norm(u, q, &mut buf).powf(r));
    Ok(chi_moment(n, r) * avg)
}

/// Exact Frobenius value for Euclidean spaces, Monte-Carlo otherwise.
pub fn gamma_norm(
    g: &FiniteRankGammaElement,
    space: &SpaceSpec,
    samples: usize,
    seed: u64,
) -> Result<GammaNormEstimate> {
    if space.is_hilbert() {
        gamma_norm_hilbert_exact(g, space)
    } else {
        gamma_norm_mc(g, space, samples, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn e1e2() -> FiniteRankGammaElement {
        FiniteRankGammaElement::from_columns(DMatrix::identity(2, 2)).unwrap()
    }

    #[test]
    fn hilbert_exact_examples() {
        let s = SpaceSpec::euclidean(2);
        assert_relative_eq!(gamma_norm_hilbert_exact(&e1e2(), &s).unwrap().value, 2f64.sqrt());
        let x = FiniteRankGammaElement::from_columns(DMatrix::from_column_slice(2, 1, &[3.0, -4.0]))
            .unwrap();
        assert_relative_eq!(gamma_norm_hilbert_exact(&x, &s).unwrap().value, 5.0);
        let z = FiniteRankGammaElement::from_columns(DMatrix::zeros(2, 3)).unwrap();
        assert_eq!(gamma_norm_hilbert_exact(&z, &s).unwrap().value, 0.0);
    }

    #[test]
    fn hilbert_exact_rejects_lq() {
        let s = SpaceSpec::new(2, 4.0, 2.0).unwrap();
        assert!(matches!(gamma_norm_hilbert_exact(&e1e2(), &s), Err(Error::NotHilbert(_))));
    }

    #[test]
    fn mc_matches_hilbert_value() {
        let s = SpaceSpec::euclidean(2);
        let est = gamma_norm_mc(&e1e2(), &s, 20_000, 3).unwrap();
        assert!((est.value - 2f64.sqrt()).abs() <= 3.0 * est.std_error);
        assert!(est.std_error > 0.0);
    }

    #[test]
    fn mc_rank_one_any_lq() {
        let x = [1.0, -2.0, 0.5];
        let g = FiniteRankGammaElement::from_columns(DMatrix::from_column_slice(3, 1, &x)).unwrap();
        for q in [1.5, 3.0, 4.0] {
            let s = SpaceSpec::new(3, q, 2.0).unwrap();
            let est = gamma_norm_mc(&g, &s, 20_000, 11).unwrap();
            let exact = norm_q(&x, q);
            assert!((est.value - exact).abs() <= 3.0 * est.std_error, "q={q}");
        }
    }

    #[test]
    fn quadrature_closed_forms() {
        let s = SpaceSpec::euclidean(2);
        let v = gamma_norm_quadrature(&e1e2(), &s, 20).unwrap();
        assert_relative_eq!(v.value, 2f64.sqrt(), epsilon = 1e-13);
        assert_eq!(v.std_error, 0.0);
        let x = [0.3, -1.2];
        let g = FiniteRankGammaElement::from_columns(DMatrix::from_column_slice(2, 1, &x)).unwrap();
        let s3 = SpaceSpec::new(2, 3.0, 2.0).unwrap();
        assert_relative_eq!(
            gamma_norm_quadrature(&g, &s3, 20).unwrap().value,
            norm_q(&x, 3.0),
            epsilon = 1e-13
        );
    }

    #[test]
    fn quadrature_guards() {
        let s = SpaceSpec::euclidean(2);
        let big = FiniteRankGammaElement::from_columns(DMatrix::zeros(2, 4)).unwrap();
        assert!(matches!(gamma_norm_quadrature(&big, &s, 20), Err(Error::TooManyColumns(4))));
        assert!(gamma_norm_quadrature(&e1e2(), &s, 10).is_err());
    }

    #[test]
    fn zero_samples_rejected() {
        let s = SpaceSpec::euclidean(2);
        assert!(gamma_norm_mc(&e1e2(), &s, 0, 1).is_err());
        assert!(gamma_norm_mc(&e1e2(), &s, 1, 1).is_err());
    }

    #[test]
    fn grid_embedding_gives_l2_norm() {
        let grid = TimeGrid::new(2.0, 4).unwrap();
        let vals = vec![1.0; 4];
        let g = FiniteRankGammaElement::from_grid_values(&grid, 1, &vals).unwrap();
        let s = SpaceSpec::euclidean(1);
        // L^2(0,2) norm of the constant 1
        assert_relative_eq!(gamma_norm_hilbert_exact(&g, &s).unwrap().value, 2f64.sqrt(), epsilon = 1e-15);
    }
}
