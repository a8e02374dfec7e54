//! Randomized invariants over generated instances.

use bsee_core::gamma::{gamma_norm_hilbert_exact, kalton_weis_extend, FiniteRankGammaElement};
use bsee_core::representation::{kernel_construction, martingale_representation, reconstruction_residual};
use bsee_core::scenario::{self, ScenarioConfig};
use bsee_core::semigroup::{matrix_exponential, semigroup_gamma_bound, spectral_norm, SearchBudget};
use bsee_core::solvers::{
    guard_theta, solve_a0, solve_general_picard, solve_linear_drift, DriverSpec, PicardConfig, ProcessSpec,
};
use bsee_core::stochastic::{conditional_expectation, expectation, ito_integral, lp_moment};
use bsee_core::{AdaptedProcess, RandomVector, SemigroupOperator, SpaceSpec, StochasticModel, TimeGrid};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn tree(n: usize) -> StochasticModel {
    StochasticModel::tree(TimeGrid::new(1.0, n).unwrap()).unwrap()
}

fn random_process(m: &StochasticModel, d: usize, seed: u64) -> AdaptedProcess {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let slices = (0..=m.steps())
        .map(|i| RandomVector::new(m, i, d, (0..m.states(i) * d).map(|_| r.sample(StandardNormal)).collect()).unwrap())
        .collect();
    AdaptedProcess::from_slices(m, slices).unwrap()
}

fn random_terminal(m: &StochasticModel, d: usize, seed: u64) -> RandomVector {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = m.steps();
    RandomVector::new(m, n, d, (0..m.states(n) * d).map(|_| r.sample(StandardNormal)).collect()).unwrap()
}

fn matrix(entries: &[f64], d: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(d, d, &entries[..d * d])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn semigroup_law(entries in prop::collection::vec(-1.0f64..1.0, 9), d in 1usize..=3, t in 0.0f64..1.0, s in 0.0f64..1.0) {
        let a = matrix(&entries, d);
        let lhs = matrix_exponential(&a, t + s).unwrap();
        let rhs = matrix_exponential(&a, t).unwrap() * matrix_exponential(&a, s).unwrap();
        prop_assert!((lhs - &rhs).amax() <= 1e-10 * rhs.amax().max(1.0));
    }

    #[test]
    fn hilbert_gamma_bound_is_largest_singular_value(entries in prop::collection::vec(-1.0f64..1.0, 9), d in 1usize..=3, n in 2usize..10) {
        let s = SemigroupOperator::new(matrix(&entries, d), TimeGrid::new(1.0, n).unwrap()).unwrap();
        let bound = semigroup_gamma_bound(&s, &SpaceSpec::euclidean(d), SearchBudget::default(), 0).unwrap().value;
        let expect = (0..=n).map(|k| spectral_norm(s.at(k))).fold(0.0, f64::max);
        prop_assert!((bound - expect).abs() <= 1e-10);
    }

    #[test]
    fn ideal_property_in_l2(coef in prop::collection::vec(-2.0f64..2.0, 12), op in prop::collection::vec(-2.0f64..2.0, 16)) {
        let g = FiniteRankGammaElement::from_columns(DMatrix::from_vec(3, 4, coef)).unwrap();
        let t = DMatrix::from_vec(4, 4, op);
        let space = SpaceSpec::euclidean(3);
        let lhs = gamma_norm_hilbert_exact(&kalton_weis_extend(&t, &g).unwrap(), &space).unwrap().value;
        let rhs = spectral_norm(&t) * gamma_norm_hilbert_exact(&g, &space).unwrap().value;
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn ito_isometry_and_martingale_property(n in 2usize..9, d in 1usize..4, seed in any::<u64>()) {
        let m = tree(n);
        let phi = random_process(&m, d, seed);
        let integral = ito_integral(&m, &phi, 0, n).unwrap();
        let lhs = lp_moment(&m, &integral, &SpaceSpec::euclidean(d)).unwrap().value.powi(2);
        let rhs: f64 = (0..n).map(|i| phi.level(i).iter().map(|x| x * x).sum::<f64>() * m.weight(i) * m.grid().dt()).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-10);
        for i in 0..=n {
            let ce = conditional_expectation(&m, &integral, i).unwrap();
            prop_assert!(ce.max_abs_diff(&ito_integral(&m, &phi, 0, i).unwrap()).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn representation_reconstructs(n in 1usize..11, d in 1usize..4, seed in any::<u64>()) {
        let m = tree(n);
        let xi = random_terminal(&m, d, seed);
        let rep = martingale_representation(&m, &xi).unwrap();
        prop_assert!(reconstruction_residual(&m, &xi, &rep).unwrap() <= 1e-10);
        let mean = expectation(&m, &xi);
        for c in 0..d {
            prop_assert!((mean[c] - rep.mean[c]).abs() <= 1e-12);
        }
    }

    #[test]
    fn kernel_is_linear(n in 2usize..8, a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let m = tree(n);
        let f = random_process(&m, 2, seed);
        let g = random_process(&m, 2, seed ^ 0x9e37);
        let combo = f.axpy(a - 1.0, &f).unwrap().axpy(b, &g).unwrap();
        let (kf, kg, kc) = (
            kernel_construction(&m, &f).unwrap().kernel,
            kernel_construction(&m, &g).unwrap().kernel,
            kernel_construction(&m, &combo).unwrap().kernel,
        );
        for i in 0..n {
            for j in 0..i {
                for node in 0..m.states(j) {
                    for c in 0..2 {
                        let e = a * kf.at(i, j, node)[c] + b * kg.at(i, j, node)[c];
                        prop_assert!((kc.at(i, j, node)[c] - e).abs() <= 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn guard_is_monotone(l in 0.0f64..5.0, dl in 0.0f64..1.0, delta in 1e-3f64..1.0, dd in 0.0f64..1.0, g in 0.1f64..3.0) {
        prop_assert!(guard_theta(l + dl, delta, g) >= guard_theta(l, delta, g));
        prop_assert!(guard_theta(l, delta + dd, g) >= guard_theta(l, delta, g));
    }

    #[test]
    fn linear_solver_with_zero_generator_matches_a0(n in 1usize..9, d in 1usize..3, seed in any::<u64>()) {
        let m = tree(n);
        let f = random_process(&m, d, seed);
        let ut = random_terminal(&m, d, seed.wrapping_add(1));
        let space = SpaceSpec::euclidean(d);
        let a0 = solve_a0(&m, &f, &ut, &space).unwrap();
        let lin = solve_linear_drift(&m, &SemigroupOperator::identity(d, *m.grid()), &f, &ut, &space).unwrap();
        prop_assert!(a0.u.max_abs_diff(&lin.u).unwrap() <= 1e-10);
        prop_assert!(a0.v.max_abs_diff(&lin.v).unwrap() <= 1e-10);
        prop_assert_eq!(lin.u.level(n), ut.values());
    }

    #[test]
    fn picard_with_fixed_drift_is_the_linear_solution(n in 2usize..9, x0 in -2.0f64..2.0, x1 in -2.0f64..2.0) {
        let m = tree(n);
        let sg = SemigroupOperator::new(DMatrix::from_row_slice(2, 2, &[0.3, 1.0, -1.0, 0.3]), *m.grid()).unwrap();
        let driver = DriverSpec::TimeProcess { process: ProcessSpec::WienerSquare { x: vec![x0, x1] } };
        let ut = ProcessSpec::WienerLinear { x: vec![x1, x0] }.terminal(&m);
        let space = SpaceSpec::euclidean(2);
        let cfg = PicardConfig { delta: 0.125f64.max(m.grid().dt()), ..Default::default() };
        let p = solve_general_picard(&m, &sg, &driver, &ut, &space, &cfg).unwrap();
        let lin = solve_linear_drift(&m, &sg, &driver.as_process(&m).unwrap(), &ut, &space).unwrap();
        prop_assert!(p.u.max_abs_diff(&lin.u).unwrap() <= cfg.tol);
        prop_assert!(p.v.max_abs_diff(&lin.v).unwrap() <= cfg.tol);
        prop_assert!(p.intervals.iter().all(|iv| iv.iterations <= 2));
        prop_assert_eq!(p.u.level(n), ut.values());
    }

    #[test]
    fn config_round_trips(idx in 0usize..14, steps in 1usize..12, seed in any::<u64>()) {
        let names: Vec<_> = scenario::builtin_names().collect();
        let cfg = ScenarioConfig::from_toml_str(scenario::builtin(names[idx % names.len()]).unwrap())
            .unwrap()
            .with_steps(steps)
            .with_seed(seed);
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn zero_data_gives_zero_solution_without_iterating() {
    let m = tree(6);
    let sg = SemigroupOperator::new(DMatrix::from_row_slice(2, 2, &[0.3, 1.0, -1.0, 0.3]), *m.grid()).unwrap();
    let ut = ProcessSpec::Zero { dim: 2 }.terminal(&m);
    let p = solve_general_picard(
        &m,
        &sg,
        &DriverSpec::Zero { dim: 2 },
        &ut,
        &SpaceSpec::euclidean(2),
        &PicardConfig { delta: 0.25, ..Default::default() },
    )
    .unwrap();
    assert_eq!(p.iterations, 0);
    assert!(p.u.levels().iter().chain(p.v.levels()).flatten().all(|v| *v == 0.0));
}

#[test]
fn a0_runs_on_path_models() {
    let m = StochasticModel::paths(TimeGrid::new(1.0, 8).unwrap(), 500, 3).unwrap();
    let f = ProcessSpec::Constant { x: vec![1.0] }.process(&m);
    let ut = ProcessSpec::WienerLinear { x: vec![2.0] }.terminal(&m);
    let sol = solve_a0(&m, &f, &ut, &SpaceSpec::euclidean(1)).unwrap();
    for node in 0..m.states(0) {
        assert!((sol.u.at(0, node)[0] + 1.0).abs() <= 1e-10);
    }
}
