//! Matrix semigroups `S(t) = exp(-tA)` cached on a time grid, and gamma-bound
//! estimation for the family `{S(t_i)}`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gamma::{gamma_norm_quadrature, FiniteRankGammaElement};
use crate::grid::TimeGrid;
use crate::rng::{self, block_pair_moments, derive_seed, StreamRng};
use crate::space::{norm_q, SpaceSpec};

/// `exp(-tA)`.
pub fn matrix_exponential(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::ShapeMismatch(format!("generator is {}x{}", a.nrows(), a.ncols())));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(invalid("t", format!("must be non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(DMatrix::identity(a.nrows(), a.ncols()));
    }
    Ok((a * -t).exp())
}

/// Builtin generators `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Zero { dim: usize },
    Diagonal { values: Vec<f64> },
    /// `omega * [[0, 1], [-1, 0]]` on the first two coordinates.
    Rotation { dim: usize, omega: f64 },
    /// `scale * tridiag(-1, 2, -1)`, the Dirichlet Laplacian stencil.
    TridiagLaplacian { dim: usize, scale: f64 },
    /// Row-major dense matrix.
    Matrix { dim: usize, entries: Vec<f64> },
}

impl Generator {
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        let m = match self {
            Generator::Zero { dim } => DMatrix::zeros(*dim, *dim),
            Generator::Diagonal { values } => DMatrix::from_diagonal(&DVector::from_column_slice(values)),
            Generator::Rotation { dim, omega } => {
                if *dim < 2 {
                    return Err(invalid("dim", "rotation generator needs dim >= 2"));
                }
                let mut m = DMatrix::zeros(*dim, *dim);
                m[(0, 1)] = *omega;
                m[(1, 0)] = -*omega;
                m
            }
            Generator::TridiagLaplacian { dim, scale } => DMatrix::from_fn(*dim, *dim, |i, j| {
                if i == j {
                    2.0 * scale
                } else if i.abs_diff(j) == 1 {
                    -scale
                } else {
                    0.0
                }
            }),
            Generator::Matrix { dim, entries } => {
                if entries.len() != dim * dim {
                    return Err(invalid(
                        "entries",
                        format!("expected {} entries for a {dim}x{dim} matrix", dim * dim),
                    ));
                }
                DMatrix::from_row_slice(*dim, *dim, entries)
            }
        };
        if m.nrows() == 0 {
            return Err(invalid("dim", "generator dimension must be positive"));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(m)
    }
}

/// Generator `A` with `S(t_k) = exp(-t_k A)` cached for `k = 0..=N`.
#[derive(Debug, Clone)]
pub struct SemigroupOperator {
    generator: DMatrix<f64>,
    grid: TimeGrid,
    cache: Vec<DMatrix<f64>>,
}

impl SemigroupOperator {
    pub fn new(generator: DMatrix<f64>, grid: TimeGrid) -> Result<Self> {
        let mut cache = Vec::with_capacity(grid.steps() + 1);
        cache.push(DMatrix::identity(generator.nrows(), generator.ncols()));
        for k in 1..=grid.steps() {
            cache.push(matrix_exponential(&generator, grid.time(k))?);
        }
        Ok(Self { generator, grid, cache })
    }

    /// The identity semigroup (`A = 0`).
    pub fn identity(dim: usize, grid: TimeGrid) -> Self {
        Self::new(DMatrix::zeros(dim, dim), grid).expect("zero generator is valid")
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.generator.nrows()
    }

    /// `S(t_k)`.
    pub fn at(&self, k: usize) -> &DMatrix<f64> {
        &self.cache[k]
    }

    pub fn cache(&self) -> &[DMatrix<f64>] {
        &self.cache
    }

    /// `out = S(t_k) x`.
    #[inline]
    pub fn apply(&self, k: usize, x: &[f64], out: &mut [f64]) {
        mat_vec(&self.cache[k], x, out);
    }

    /// `out += c * S(t_k) x`.
    #[inline]
    pub fn apply_add(&self, k: usize, c: f64, x: &[f64], out: &mut [f64]) {
        let m = &self.cache[k];
        let d = x.len();
        for (j, xj) in x.iter().enumerate() {
            let cx = c * xj;
            if cx == 0.0 {
                continue;
            }
            for i in 0..d {
                out[i] += m[(i, j)] * cx;
            }
        }
    }

    /// `max ||S(t_a) S(t_b) - S(t_a + t_b)||_op` over `a + b <= N`.
    pub fn semigroup_law_defect(&self) -> f64 {
        let n = self.grid.steps();
        let mut worst = 0.0_f64;
        for a in 0..=n {
            for b in 0..=(n - a) {
                let diff = &self.cache[a] * &self.cache[b] - &self.cache[a + b];
                worst = worst.max(spectral_norm(&diff));
            }
        }
        worst
    }

    pub fn is_identity(&self) -> bool {
        self.generator.iter().all(|x| *x == 0.0)
    }
}

#[inline]
pub(crate) fn mat_vec(m: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..d {
            acc += m[(i, j)] * x[j];
        }
        *o = acc;
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaBoundKind {
    ExactHilbert,
    LowerBoundSearch,
}

/// Finite sequences `(S(t_n), x_n)` realising a gamma-bound ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaWitness {
    pub time_indices: Vec<usize>,
    pub times: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub ratio: f64,
    pub std_error: f64,
    /// Monte-Carlo samples behind `ratio`; zero for deterministic evaluation.
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaBoundEstimate {
    pub value: f64,
    pub kind: GammaBoundKind,
    pub samples: usize,
    pub witness: Option<GammaWitness>,
}

/// Work budget of the randomized witness search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    /// Random multi-term candidates.
    pub candidates: usize,
    /// Monte-Carlo samples per candidate with more than three terms.
    pub samples: usize,
    /// Largest number of terms in a candidate.
    pub max_terms: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self { candidates: 64, samples: 4096, max_terms: 6 }
    }
}

const WITNESS_QUADRATURE_NODES: usize = 24;
const POWER_STARTS: usize = 6;

/// Gamma bound of `{S(t_i) : i = 0..=N}`.
///
/// For the Euclidean norm the value is exact (`max_i ||S(t_i)||_op`). For
/// other `l^q` norms it is the largest ratio
/// `(E||sum g_n S(t_n) x_n||^2 / E||sum g_n x_n||^2)^(1/2)` found by search,
/// which is a lower bound for the true constant.
pub fn semigroup_gamma_bound(
    s: &SemigroupOperator,
    space: &SpaceSpec,
    budget: SearchBudget,
    seed: u64,
) -> Result<GammaBoundEstimate> {
    space.check_len(s.dim())?;
    if s.cache.is_empty() {
        return Err(invalid("grid", "semigroup has an empty grid"));
    }
    if budget.candidates == 0 || budget.samples == 0 || budget.max_terms == 0 {
        return Err(invalid("budget", "search budget must be positive"));
    }
    if space.is_hilbert() {
        let (k, value) = s
            .cache
            .iter()
            .map(spectral_norm)
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, v)| if v > best.1 { (k, v) } else { best });
        let svd = s.cache[k].clone().svd(false, true);
        let imax = svd.singular_values.imax();
        let v_t = svd.v_t.expect("requested right singular vectors");
        let x: Vec<f64> = v_t.row(imax).iter().copied().collect();
        let witness = GammaWitness {
            time_indices: vec![k],
            times: vec![s.grid.time(k)],
            vectors: vec![x],
            ratio: value,
            std_error: 0.0,
            samples: 0,
        };
        return Ok(GammaBoundEstimate {
            value,
            kind: GammaBoundKind::ExactHilbert,
            samples: 0,
            witness: Some(witness),
        });
    }

    let q = space.norm_exponent();
    // Single operators: l^q -> l^q norm by power iteration from several starts.
    let singles: Vec<(f64, Vec<f64>)> = (0..s.cache.len())
        .into_par_iter()
        .map(|k| lq_operator_norm(&s.cache[k], q, POWER_STARTS, derive_seed(seed, k as u64)))
        .collect();
    let (k_best, (single_value, single_x)) = singles
        .into_iter()
        .enumerate()
        .fold((0, (f64::NEG_INFINITY, Vec::new())), |best, (k, cand)| {
            if cand.0 > best.1 .0 {
                (k, cand)
            } else {
                best
            }
        });
    let mut best = GammaWitness {
        time_indices: vec![k_best],
        times: vec![s.grid.time(k_best)],
        vectors: vec![single_x],
        ratio: single_value,
        std_error: 0.0,
        samples: 0,
    };

    // Multi-term candidates.
    let search_seed = derive_seed(seed, 0x5EA2C4);
    let cands: Vec<GammaWitness> = (0..budget.candidates)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(search_seed, c as u64);
            let w = random_candidate(s, space, budget.max_terms, &mut rng);
            evaluate_witness(s, space, w, budget.samples, derive_seed(search_seed, c as u64))
        })
        .collect();
    let mut multi: Option<GammaWitness> = None;
    for w in cands {
        if multi.as_ref().is_none_or(|m| w.ratio > m.ratio) {
            multi = Some(w);
        }
    }
    if let Some(m) = multi {
        // Re-evaluate the winner with fresh randomness so the reported value is
        // not biased upward by the maximisation.
        let m = if m.samples > 0 {
            evaluate_witness(s, space, m, budget.samples, derive_seed(seed, 0xF1E5))
        } else {
            m
        };
        if m.ratio > best.ratio {
            best = m;
        }
    }
    Ok(GammaBoundEstimate {
        value: best.ratio,
        kind: GammaBoundKind::LowerBoundSearch,
        samples: budget.samples,
        witness: Some(best),
    })
}

/// Re-evaluate a stored witness; returns `(ratio, std_error)`.
pub fn replay_witness(
    s: &SemigroupOperator,
    space: &SpaceSpec,
    witness: &GammaWitness,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    space.check_len(s.dim())?;
    if witness.time_indices.iter().any(|&k| k > s.grid.steps()) {
        return Err(invalid("witness", "time index outside the grid"));
    }
    let w = evaluate_witness(s, space, witness.clone(), samples, seed);
    Ok((w.ratio, w.std_error))
}

fn random_candidate(
    s: &SemigroupOperator,
    space: &SpaceSpec,
    max_terms: usize,
    rng: &mut StreamRng,
) -> GammaWitness {
    use rand::Rng;
    let n = if max_terms <= 2 { max_terms } else { rng.random_range(2..=max_terms) };
    let d = space.dim();
    let steps = s.grid.steps();
    let time_indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..=steps)).collect();
    let vectors: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut v = vec![0.0; d];
            rng::fill_normal(rng, &mut v);
            // Sparse candidates probe the corners of the l^q ball.
            if rng.random_bool(0.3) {
                let keep = rng.random_range(0..d);
                for (i, x) in v.iter_mut().enumerate() {
                    if i != keep {
                        *x = 0.0;
                    }
                }
            }
            v
        })
        .collect();
    GammaWitness {
        times: time_indices.iter().map(|&k| s.grid.time(k)).collect(),
        time_indices,
        vectors,
        ratio: 0.0,
        std_error: 0.0,
        samples: 0,
    }
}

fn evaluate_witness(
    s: &SemigroupOperator,
    space: &SpaceSpec,
    mut w: GammaWitness,
    samples: usize,
    seed: u64,
) -> GammaWitness {
    let d = space.dim();
    let n = w.vectors.len();
    let plain = DMatrix::from_fn(d, n, |r, c| w.vectors[c][r]);
    let mut mapped = DMatrix::zeros(d, n);
    for c in 0..n {
        let mut out = vec![0.0; d];
        s.apply(w.time_indices[c], &w.vectors[c], &mut out);
        mapped.column_mut(c).copy_from_slice(&out);
    }
    if n <= 3 {
        let num = FiniteRankGammaElement::from_columns(mapped).expect("finite");
        let den = FiniteRankGammaElement::from_columns(plain).expect("finite");
        let a = gamma_norm_quadrature(&num, space, WITNESS_QUADRATURE_NODES).expect("n <= 3").value;
        let b = gamma_norm_quadrature(&den, space, WITNESS_QUADRATURE_NODES).expect("n <= 3").value;
        w.ratio = if b > 0.0 { a / b } else { 0.0 };
        w.std_error = 0.0;
        w.samples = 0;
        return w;
    }
    let q = space.norm_exponent();
    let (ma, mb, cross) = block_pair_moments(samples, seed, |rng| {
        let mut g = vec![0.0; n];
        rng::fill_normal(rng, &mut g);
        let mut ya = vec![0.0; d];
        let mut yb = vec![0.0; d];
        for (c, gc) in g.iter().enumerate() {
            for r in 0..d {
                ya[r] += gc * mapped[(r, c)];
                yb[r] += gc * plain[(r, c)];
            }
        }
        (norm_q(&ya, q).powi(2), norm_q(&yb, q).powi(2))
    });
    let (a, b) = (ma.mean(), mb.mean());
    let ratio_sq = if b > 0.0 { a / b } else { 0.0 };
    let nn = ma.n as f64;
    let var_a = (ma.sum_sq / nn - a * a).max(0.0);
    let var_b = (mb.sum_sq / nn - b * b).max(0.0);
    let cov = cross / nn - a * b;
    let var_r = (var_a / (b * b) + a * a * var_b / b.powi(4) - 2.0 * a * cov / b.powi(3)).max(0.0) / nn;
    w.ratio = ratio_sq.sqrt();
    w.std_error = if w.ratio > 0.0 { var_r.sqrt() / (2.0 * w.ratio) } else { 0.0 };
    w.samples = samples;
    w
}

/// `||M||_{q -> q}` by Boyd's power iteration from the basis vectors and
/// `starts` random vectors; returns the best value and its maximiser.
pub fn lq_operator_norm(m: &DMatrix<f64>, q: f64, starts: usize, seed: u64) -> (f64, Vec<f64>) {
    let d = m.ncols();
    let qd = q / (q - 1.0);
    let mut inits: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            e
        })
        .collect();
    let mut rng = rng::stream(seed, 0);
    for _ in 0..starts {
        let mut v = vec![0.0; d];
        rng::fill_normal(&mut rng, &mut v);
        inits.push(v);
    }
    let mut best = (0.0, inits[0].clone());
    let mt = m.transpose();
    for mut x in inits {
        let nx = norm_q(&x, q);
        if nx == 0.0 {
            continue;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let mut y = vec![0.0; m.nrows()];
        let mut value = 0.0;
        for _ in 0..500 {
            mat_vec(m, &x, &mut y);
            let ny = norm_q(&y, q);
            if ny == 0.0 {
                break;
            }
            let converged = (ny - value).abs() <= 1e-15 * ny;
            value = ny;
            if converged {
                break;
            }
            let dual_y = dual_map(&y, q);
            let mut z = vec![0.0; d];
            mat_vec(&mt, &dual_y, &mut z);
            if norm_q(&z, qd) == 0.0 {
                break;
            }
            x = dual_map(&z, qd);
        }
        mat_vec(m, &x, &mut y);
        let v = norm_q(&y, q) / norm_q(&x, q);
        if v > best.0 {
            best = (v, x);
        }
    }
    best
}

/// `sign(y)|y|^(r-1) / ||y||_r^(r-1)`, the norming functional of `y` in `l^r`.
fn dual_map(y: &[f64], r: f64) -> Vec<f64> {
    let n = norm_q(y, r);
    y.iter().map(|v| v.signum() * (v.abs() / n).powf(r - 1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn zero_generator_gives_identity() {
        let a = DMatrix::zeros(3, 3);
        assert_eq!(matrix_exponential(&a, 5.0).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn diagonal_generator() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.5, 3.0]));
        let e = matrix_exponential(&a, 0.7).unwrap();
        for (i, ai) in [1.0_f64, -0.5, 3.0].iter().enumerate() {
            assert_relative_eq!(e[(i, i)], (-ai * 0.7_f64).exp(), max_relative = 1e-13);
        }
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn rotation_by_pi_is_minus_identity() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let e = matrix_exponential(&a, PI).unwrap();
        assert!((e + DMatrix::identity(2, 2)).abs().max() < 1e-13);
    }

    #[test]
    fn large_argument_accuracy() {
        // ||tA|| = 100 on a diagonal generator with both signs.
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, -10.0]));
        let e = matrix_exponential(&a, 10.0).unwrap();
        assert_relative_eq!(e[(0, 0)], (-100f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(e[(1, 1)], 100f64.exp(), max_relative = 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let a = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(matches!(matrix_exponential(&a, 1.0), Err(Error::NonFinite)));
    }

    #[test]
    fn cache_obeys_semigroup_law() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let a = Generator::TridiagLaplacian { dim: 4, scale: 3.0 }.matrix().unwrap();
        let s = SemigroupOperator::new(a, grid).unwrap();
        assert_eq!(s.at(0), &DMatrix::identity(4, 4));
        assert!(s.semigroup_law_defect() <= 1e-10);
        let r = SemigroupOperator::new(Generator::Rotation { dim: 3, omega: 2.0 }.matrix().unwrap(), grid).unwrap();
        assert!(r.semigroup_law_defect() <= 1e-10);
    }

    #[test]
    fn hilbert_gamma_bounds() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let space = SpaceSpec::euclidean(2);
        let b = SearchBudget::default();
        let id = SemigroupOperator::identity(2, grid);
        let est = semigroup_gamma_bound(&id, &space, b, 1).unwrap();
        assert_eq!(est.kind, GammaBoundKind::ExactHilbert);
        assert_relative_eq!(est.value, 1.0, epsilon = 1e-14);

        let contr = SemigroupOperator::new(Generator::Diagonal { values: vec![1.0, 2.0] }.matrix().unwrap(), grid).unwrap();
        assert_relative_eq!(semigroup_gamma_bound(&contr, &space, b, 1).unwrap().value, 1.0, epsilon = 1e-14);

        let grow = SemigroupOperator::new(DMatrix::from_element(1, 1, -1.0), grid).unwrap();
        let est = semigroup_gamma_bound(&grow, &SpaceSpec::euclidean(1), b, 1).unwrap();
        assert_relative_eq!(est.value, std::f64::consts::E, max_relative = 1e-12);
    }

    #[test]
    fn zero_budget_rejected() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let s = SemigroupOperator::identity(2, grid);
        let b = SearchBudget { candidates: 0, samples: 10, max_terms: 3 };
        assert!(semigroup_gamma_bound(&s, &SpaceSpec::euclidean(2), b, 0).is_err());
    }

    #[test]
    fn lq_power_iteration_finds_known_norms() {
        // ||.||_{q->q} of a diagonal matrix is its largest entry.
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 2.0, 1.0]));
        let (v, _) = lq_operator_norm(&m, 3.0, 2, 1);
        assert_relative_eq!(v, 2.0, epsilon = 1e-12);
        // 11^T on l^q has norm ||1||_q ||1||_q' = 2 in two dimensions.
        let ones = DMatrix::from_element(2, 2, 1.0);
        let (v, _) = lq_operator_norm(&ones, 4.0, 4, 2);
        assert_relative_eq!(v, 2.0, epsilon = 1e-9);
    }
}
