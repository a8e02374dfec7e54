//! State spaces `(R^d, ||.||_q)` together with the moment exponent `p` used
//! for `L^p(Omega; X)` norms.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Finite-dimensional `l^q` state space and the moment exponent of the
/// surrounding `L^p(Omega; X)` norm. Both exponents live in `(1, inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceSpec {
    dim: usize,
    norm_exponent: f64,
    moment_exponent: f64,
}

impl SpaceSpec {
    pub fn new(dim: usize, norm_exponent: f64, moment_exponent: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        check_exponent("norm_exponent", norm_exponent)?;
        check_exponent("moment_exponent", moment_exponent)?;
        Ok(Self { dim, norm_exponent, moment_exponent })
    }

    /// Euclidean space with `p = 2`.
    pub fn euclidean(dim: usize) -> Self {
        Self { dim, norm_exponent: 2.0, moment_exponent: 2.0 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm_exponent(&self) -> f64 {
        self.norm_exponent
    }

    pub fn moment_exponent(&self) -> f64 {
        self.moment_exponent
    }

    pub fn is_hilbert(&self) -> bool {
        self.norm_exponent == 2.0
    }

    /// Same state norm, different moment exponent.
    pub fn with_moment(&self, moment_exponent: f64) -> Result<Self> {
        Self::new(self.dim, self.norm_exponent, moment_exponent)
    }

    /// Unchecked norm of a slice of length `dim`.
    #[inline]
    pub fn norm(&self, v: &[f64]) -> f64 {
        norm_q(v, self.norm_exponent)
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: len });
        }
        Ok(())
    }
}

fn check_exponent(field: &'static str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 1.0) {
        return Err(invalid(field, format!("must lie in (1, inf), got {value}")));
    }
    Ok(())
}

/// `(sum |v_i|^q)^(1/q)` for the space's norm exponent `q`.
pub fn lp_norm(v: &[f64], space: &SpaceSpec) -> Result<f64> {
    space.check_len(v.len())?;
    Ok(space.norm(v))
}

#[inline]
pub(crate) fn norm_q(v: &[f64], q: f64) -> f64 {
    if q == 2.0 {
        return v.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    // Scale by the max entry so large q does not overflow.
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let s: f64 = v.iter().map(|x| (x.abs() / scale).powf(q)).sum();
    scale * s.powf(1.0 / q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn euclidean_three_four_five() {
        let s = SpaceSpec::euclidean(2);
        assert_eq!(lp_norm(&[3.0, 4.0], &s).unwrap(), 5.0);
    }

    #[test]
    fn zero_vector_has_zero_norm() {
        for q in [1.5, 2.0, 3.0, 7.0] {
            let s = SpaceSpec::new(3, q, 2.0).unwrap();
            assert_eq!(lp_norm(&[0.0; 3], &s).unwrap(), 0.0);
        }
    }

    #[test]
    fn l4_of_ones() {
        let s = SpaceSpec::new(2, 4.0, 2.0).unwrap();
        assert_relative_eq!(lp_norm(&[1.0, 1.0], &s).unwrap(), 2f64.powf(0.25), epsilon = 1e-15);
    }

    #[test]
    fn rejects_endpoint_exponents() {
        assert!(SpaceSpec::new(2, 1.0, 2.0).is_err());
        assert!(SpaceSpec::new(2, 2.0, 1.0).is_err());
        assert!(SpaceSpec::new(2, f64::INFINITY, 2.0).is_err());
        assert!(SpaceSpec::new(0, 2.0, 2.0).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let s = SpaceSpec::euclidean(3);
        assert!(matches!(lp_norm(&[1.0, 2.0], &s), Err(Error::DimensionMismatch { .. })));
    }
}
