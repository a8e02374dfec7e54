use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("operation requires the Euclidean state norm (norm_exponent = 2), got {0}")]
    NotHilbert(f64),

    #[error("process is not adapted: value at level {level} differs across the subtree of node {node}")]
    NotAdapted { level: usize, node: usize },

    #[error("level {level} out of range (model has {steps} steps)")]
    LevelOutOfRange { level: usize, steps: usize },

    #[error("kernel violates its lower-triangular support at (s={s}, sigma={sigma})")]
    SupportViolation { s: usize, sigma: usize },

    #[error("objects live on different grids or models: {0}")]
    ModelMismatch(String),

    #[error("operation requires a binary tree model")]
    RequiresTree,

    #[error("tree depth {0} exceeds the hard limit of {max}", max = crate::stochastic::MAX_TREE_DEPTH)]
    TreeTooDeep(usize),

    #[error("quadrature supports at most 3 Gaussian dimensions, got {0}")]
    TooManyColumns(usize),

    #[error(
        "Picard map is not a contraction: guard theta = {theta:.6} >= {threshold} \
         (try delta <= {suggested_delta:.6})"
    )]
    NonContraction { theta: f64, threshold: f64, suggested_delta: f64 },

    #[error("no convergence after {iterations} iterations (last difference {last_difference:.3e}, theta = {theta:.6})")]
    MaxIterations { iterations: usize, last_difference: f64, theta: f64 },

    #[error("inner fixed point diverges: dt * L = {0:.6} >= 1")]
    InnerDivergence(f64),

    #[error("driver violates its declared {bound} bound: observed {observed:.6e} > declared {declared:.6e}")]
    DriverBound { bound: &'static str, observed: f64, declared: f64 },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { field, reason: reason.into() }
}
