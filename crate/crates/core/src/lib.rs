//! Numerical laboratory for backward stochastic evolution equations
//! `dU + AU dt = f(t, U, V) dt + V dW`, `U(T) = u_T`, on a finite-dimensional
//! `ℓ^q` state space driven by a scalar Brownian motion.
//!
//! Layers, bottom up: state spaces and semigroups ([`space`], [`semigroup`]),
//! γ-radonifying norms ([`gamma`]), the probability layer on binary trees or
//! simulated paths ([`stochastic`]), martingale and kernel representations
//! ([`representation`]), the solvers ([`solvers`]) and run orchestration
//! ([`scenario`], [`verify`]).

pub mod error;
pub mod gamma;
pub mod grid;
pub mod quadrature;
pub mod representation;
pub mod rng;
pub mod scenario;
pub mod semigroup;
pub mod solvers;
pub mod space;
pub mod stochastic;
pub mod verify;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use semigroup::{Generator, SemigroupOperator};
pub use space::SpaceSpec;
pub use stochastic::{AdaptedKernel, AdaptedProcess, ModelKind, RandomVector, StochasticModel};
