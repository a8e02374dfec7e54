//! Gamma-radonifying norms of finite-rank operators `H -> X` and the
//! operators that act on them: extensions of Hilbert-side operators,
//! pointwise multipliers, semigroup convolutions and the nesting map
//! `gamma(0,T; gamma(0,T; X)) -> gamma((0,T)^2; X)`.

mod element;
mod kernel;
mod operators;

pub use element::{
    gamma_norm, gamma_norm_hilbert_exact, gamma_norm_mc, gamma_norm_quadrature, gamma_p_norm,
    FiniteRankGammaElement, GammaMethod, GammaNormEstimate, HilbertFamily,
};
pub(crate) use element::gaussian_moment_quadrature;
pub use kernel::{nest_flatten, nested_gamma_norm, KernelGammaElement};
pub use operators::{
    convolve_kernel, convolve_semigroup, indefinite_integral_row, kalton_weis_extend,
    pointwise_multiply, GridFunction,
};
