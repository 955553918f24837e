//! Scalar special functions used by the channel and detection models.

use statrs::function::erf;
use statrs::function::gamma;

/// Bessel function of the first kind, order zero.
pub fn bessel_j0(x: f64) -> f64 {
    libm::j0(x)
}

/// Gaussian tail probability Q(x) = P(N(0,1) > x).
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of [`q_function`] on (0, 1).
pub fn q_inverse(p: f64) -> f64 {
    let mut x = std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * p);
    // polish with Newton steps against the accurate erfc
    for _ in 0..2 {
        let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if pdf <= 0.0 {
            break;
        }
        x += (q_function(x) - p) / pdf;
    }
    x
}

/// Regularized lower incomplete gamma P(a, x); the Gamma(a, 1) CDF at x.
pub fn gamma_lower_regularized(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if !x.is_finite() {
        return 1.0;
    }
    gamma::gamma_lr(a, x)
}

pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}
