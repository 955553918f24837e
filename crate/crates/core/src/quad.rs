//! Numerical integration helpers.

use thiserror::Error;

use crate::special::{gamma_lower_regularized, ln_gamma};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("integral did not converge on [{a}, {b}]: error estimate {estimate:e} exceeds {tolerance:e}")]
    NotConverged {
        a: f64,
        b: f64,
        estimate: f64,
        tolerance: f64,
    },
    #[error("integrand produced a non-finite value")]
    NonFinite,
}

/// Default absolute tolerance for expectations over eigenvalue laws.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Upper-tail mass left out when truncating a Gamma law.
pub const GAMMA_TAIL: f64 = 1e-12;

/// Integrate `f` on [a, b] to an absolute tolerance.
///
/// The interval is bisected whenever a panel fails to meet its share of the
/// tolerance, up to a fixed depth.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64, QuadError> {
    integrate_rec(&f, a, b, tol, 0)
}

fn integrate_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, QuadError> {
    let out = quadrature::double_exponential::integrate(f, a, b, tol);
    if !out.integral.is_finite() {
        return Err(QuadError::NonFinite);
    }
    if out.error_estimate <= tol {
        return Ok(out.integral);
    }
    if depth >= 12 {
        return Err(QuadError::NotConverged {
            a,
            b,
            estimate: out.error_estimate,
            tolerance: tol,
        });
    }
    let mid = 0.5 * (a + b);
    Ok(integrate_rec(f, a, mid, 0.5 * tol, depth + 1)?
        + integrate_rec(f, mid, b, 0.5 * tol, depth + 1)?)
}

/// Point beyond which a Gamma(shape, 1) law has less than `tail` mass.
pub fn gamma_cutoff(shape: f64, tail: f64) -> f64 {
    let mut x = shape.max(1.0);
    while 1.0 - gamma_lower_regularized(shape, x) > tail {
        x *= 1.25;
    }
    x
}

/// Gamma(shape, 1) density.
pub fn gamma_pdf(shape: f64, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if x == 0.0 {
        return if shape == 1.0 {
            1.0
        } else if shape < 1.0 {
            f64::INFINITY
        } else {
            0.0
        };
    }
    ((shape - 1.0) * x.ln() - x - ln_gamma(shape)).exp()
}

/// E[f(X)] for X ~ Gamma(shape, 1), truncated where the tail mass drops
/// below [`GAMMA_TAIL`].
pub fn gamma_expectation<F: Fn(f64) -> f64>(f: F, shape: f64, tol: f64) -> Result<f64, QuadError> {
    let x_max = gamma_cutoff(shape, GAMMA_TAIL);
    // split at the mode so the bulk and the tail get their own panels
    let split = (shape - 1.0).max(1.0).min(x_max);
    let g = |x: f64| f(x) * gamma_pdf(shape, x);
    Ok(integrate(&g, 0.0, split, 0.5 * tol)? + integrate(&g, split, x_max, 0.5 * tol)?)
}
