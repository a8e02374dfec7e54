//! Brownian drivers on a uniform grid: an exact binary tree and a seeded
//! Gaussian path ensemble, the processes adapted to their filtrations, and
//! the engine operations (conditional expectation, Ito integral, moments).

mod model;
mod ops;
mod process;

pub use model::{IncrementCheck, ModelKind, NodeView, StochasticModel, MAX_TREE_DEPTH, RIDGE_LAMBDA};
pub(crate) use ops::{time_l2_norm_levels, tree_parent_average};
pub use ops::{
    conditional_expectation, expectation, gamma_norm_of_process, ito_integral, lp_moment, mean_norm,
    scrambling_check, stochastic_fubini_swap, time_l2_norm, FubiniReport, MomentEstimate,
};
pub use process::{AdaptedKernel, AdaptedProcess, RandomVector};
