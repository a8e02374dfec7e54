//! Mild solutions of `dU + AU dt = f dt + V dW`, `U(T) = u_T`, on a grid: the
//! `A = 0` and linear-drift constructions, Picard iteration for drivers of
//! the solution, a dynamic-programming oracle for trees, and diagnostics
//! against the discrete mild equation and closed forms.

mod diagnostics;
mod driver;
mod linear;
mod oracle;
mod picard;

pub use diagnostics::{closed_form_error, continuity_modulus, observed_order, ClosedForm};
pub use driver::{DriverCheck, DriverSpec, ProcessSpec};
pub use linear::{
    discrete_mild_residual, mild_residual_for_drift, solve_a0, solve_linear_drift, IntervalReport, ResidualReport,
    SolutionPair,
};
pub use oracle::{backward_recursion_oracle, INNER_TOL};
pub use picard::{
    contraction_guard, guard_theta, solve_general_picard, solve_picard_from, suggest_delta, uniqueness_check,
    unit_noise, GuardReport, PicardConfig, UniquenessReport, DRIVER_CHECK_SAMPLES,
};
