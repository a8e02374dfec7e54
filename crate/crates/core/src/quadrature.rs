//! Deterministic Gaussian expectations `E ||sum_j gamma_j x_j||^r` for up to
//! three Gaussian dimensions.
//!
//! The integrand `||A g||^r` is positively homogeneous of degree `r`, so the
//! expectation splits into the radial chi moment `E R^r` (closed form) times
//! the average of `||A u||^r` over the unit sphere `S^{n-1}`. The angular
//! average is smooth whenever `A` has full column rank and the norm exponent
//! is an even integer, and the periodic trapezoid / Gauss-Legendre product
//! rules used below then converge spectrally.

use statrs::function::gamma::ln_gamma;

/// `E R^r` for `R^2 ~ chi^2_n`.
pub fn chi_moment(n: usize, r: f64) -> f64 {
    let n = n as f64;
    (0.5 * r * 2f64.ln() + ln_gamma(0.5 * (n + r)) - ln_gamma(0.5 * n)).exp()
}

/// `(E |gamma|^r)^(1/r)` for a standard normal `gamma`.
pub fn gaussian_abs_moment_root(r: f64) -> f64 {
    chi_moment(1, r).powf(1.0 / r)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Newton on the Legendre
/// recurrence).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let j = j as f64;
                p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() <= 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Average of `h(u)` over the unit sphere in `R^n`, `n in 1..=3`, with
/// roughly `nodes` points per angular dimension.
pub fn sphere_average<F: FnMut(&[f64]) -> f64>(n: usize, nodes: usize, mut h: F) -> f64 {
    use std::f64::consts::PI;
    match n {
        1 => 0.5 * (h(&[1.0]) + h(&[-1.0])),
        2 => {
            let k = 4 * nodes;
            let mut acc = 0.0;
            for i in 0..k {
                let th = 2.0 * PI * i as f64 / k as f64;
                acc += h(&[th.cos(), th.sin()]);
            }
            acc / k as f64
        }
        3 => {
            let (z, wz) = gauss_legendre(2 * nodes);
            let k = 4 * nodes;
            let mut acc = 0.0;
            for (zi, wi) in z.iter().zip(&wz) {
                let rho = (1.0 - zi * zi).max(0.0).sqrt();
                let mut ring = 0.0;
                for j in 0..k {
                    let ph = 2.0 * PI * (j as f64 + 0.5) / k as f64;
                    ring += h(&[rho * ph.cos(), rho * ph.sin(), *zi]);
                }
                acc += wi * ring / k as f64;
            }
            0.5 * acc
        }
        _ => panic!("sphere_average supports n <= 3"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        let int: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert_relative_eq!(int, 2.0 / 13.0, epsilon = 1e-14);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn chi_moments() {
        assert_relative_eq!(chi_moment(3, 2.0), 3.0, epsilon = 1e-12);
        assert_relative_eq!(chi_moment(1, 4.0), 3.0, epsilon = 1e-12);
        assert_relative_eq!(gaussian_abs_moment_root(2.0), 1.0, epsilon = 1e-12);
        // E|g| = sqrt(2/pi)
        assert_relative_eq!(chi_moment(1, 1.0), (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn sphere_average_of_squares() {
        for n in 1..=3 {
            let avg = sphere_average(n, 20, |u| u[0] * u[0]);
            assert_relative_eq!(avg, 1.0 / n as f64, epsilon = 1e-13);
        }
    }
}
