//! What the secondary receiver learns during the sensing phase of a slot.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{gaussian_complex, hermitian_eig, ComplexMatrix, MatrixError};
use crate::special::{gamma_lower_regularized, q_function, q_inverse};
use crate::traffic::PuLinkState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensingError {
    #[error("need at least m_s = {m_s} samples, got {n}")]
    TooFewSamples { n: usize, m_s: usize },
    #[error("miss probability {0} outside (0, 1)")]
    InvalidMissProbability(f64),
    #[error("invalid sensing parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("primary antenna count {m_p} must be below {m_s}")]
    BadRank { m_s: usize, m_p: usize },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingConfig {
    /// Snapshots per sensing phase.
    pub n_samples: usize,
    /// Noise power per antenna.
    pub sigma_w2: f64,
    /// Target probability of wrongly flipping the transmitter label.
    pub p_m: f64,
    /// Per-antenna transmit power of the primaries, linear.
    pub pu_tx_power: f64,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            n_samples: 200,
            sigma_w2: 1.0,
            p_m: 1e-4,
            pu_tx_power: 2.0,
        }
    }
}

impl SensingConfig {
    pub fn validate(&self, m_s: usize) -> Result<(), SensingError> {
        if self.n_samples < m_s {
            return Err(SensingError::TooFewSamples {
                n: self.n_samples,
                m_s,
            });
        }
        if !(self.p_m > 0.0 && self.p_m < 1.0) {
            return Err(SensingError::InvalidMissProbability(self.p_m));
        }
        if !(self.sigma_w2 > 0.0 && self.sigma_w2.is_finite()) {
            return Err(SensingError::InvalidParameter("sigma_w2 must be positive"));
        }
        if !(self.pu_tx_power >= 0.0 && self.pu_tx_power.is_finite()) {
            return Err(SensingError::InvalidParameter(
                "pu_tx_power must be non-negative",
            ));
        }
        Ok(())
    }

    /// Energy-detection threshold on Tr(Q)/M_s: noise mean plus three
    /// standard deviations of a single-antenna estimate.
    pub fn activity_threshold(&self) -> f64 {
        self.sigma_w2 * (1.0 + 3.0 / (self.n_samples as f64).sqrt())
    }
}

/// Orthonormal basis of the estimated noise subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct NullSpace {
    pub basis: ComplexMatrix,
    pub age: u64,
    pub band: usize,
    /// Gap between the smallest signal eigenvalue and the largest noise one.
    pub spectral_gap: f64,
}

impl NullSpace {
    /// The signal/noise split was ambiguous; any frame of the right size was
    /// returned.
    pub fn is_degenerate(&self) -> bool {
        self.spectral_gap < 1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateEstimate {
    pub state: PuLinkState,
    pub p_null: f64,
    pub threshold: f64,
    pub error_prob: f64,
}

/// P_x G G^H + sigma^2 I: the covariance seen with unlimited snapshots.
pub fn asymptotic_covariance(channel: &ComplexMatrix, cfg: &SensingConfig) -> ComplexMatrix {
    let m_s = channel.rows();
    let signal = (channel * &channel.adjoint()).scale(cfg.pu_tx_power);
    &signal + &ComplexMatrix::identity(m_s).scale(cfg.sigma_w2)
}

/// (1/N) sum_n y(n) y(n)^H with y = G x + w.
pub fn sample_covariance<R: Rng + ?Sized>(
    channel: &ComplexMatrix,
    cfg: &SensingConfig,
    rng: &mut R,
) -> ComplexMatrix {
    let n = cfg.n_samples;
    let x = gaussian_complex(channel.cols(), n, rng).scale(cfg.pu_tx_power.sqrt());
    let w = gaussian_complex(channel.rows(), n, rng).scale(cfg.sigma_w2.sqrt());
    let y = &(channel * &x) + &w;
    (&y * &y.adjoint()).scale(1.0 / n as f64)
}

/// Eigenvectors of the m_s - m_p smallest eigenvalues of `cov`.
pub fn extract_null_space(
    cov: &ComplexMatrix,
    m_p: usize,
    band: usize,
) -> Result<NullSpace, SensingError> {
    let m_s = cov.rows();
    if m_p == 0 || m_p >= m_s {
        return Err(SensingError::BadRank { m_s, m_p });
    }
    let eig = hermitian_eig(cov)?;
    let gap = eig.values[m_p - 1] - eig.values[m_p];
    let scale = eig.values[0].abs().max(1.0);
    let null = NullSpace {
        basis: eig.vectors.columns(m_p, m_s - m_p),
        age: 0,
        band,
        spectral_gap: gap / scale,
    };
    if null.is_degenerate() {
        log::warn!("band {band}: degenerate spectrum, null space is arbitrary");
    }
    Ok(null)
}

/// Energy detector: is any primary transmitting?
pub fn detect_activity(cov_now: &ComplexMatrix, cfg: &SensingConfig) -> bool {
    cov_now.trace().re / cov_now.rows() as f64 > cfg.activity_threshold()
}

struct NullPowerLaw {
    mu_p: f64,
    sigma_p: f64,
    threshold: f64,
}

fn null_power_law(cfg: &SensingConfig, alpha: f64, tau: u64, mu: f64, m_s: usize) -> NullPowerLaw {
    let s2 = cfg.sigma_w2;
    let a = alpha.powf(2.0 * tau as f64);
    let mu_p = (1.0 - a) * mu + a * m_s as f64 * s2;
    let sigma_p = (1.0 - a) / (cfg.n_samples as f64).sqrt() * (mu * mu + s2 * s2).sqrt();
    let threshold = q_inverse(cfg.p_m) * sigma_p + mu_p;
    NullPowerLaw {
        mu_p,
        sigma_p,
        threshold,
    }
}

/// Decide whether the transmitter is the one whose null space is stored.
///
/// `p_null` is the power received inside the stored null space; a small
/// value means the same primary is still transmitting.
pub fn estimate_pu_state(
    stored: &NullSpace,
    stored_label: PuLinkState,
    cov_now: &ComplexMatrix,
    cfg: &SensingConfig,
    alpha: f64,
    tau: u64,
) -> StateEstimate {
    let a = &stored.basis;
    let p_null = (&(&a.adjoint() * cov_now) * a).trace().re;
    let m_s = cov_now.rows();
    let m_p = m_s - a.cols();
    let mu = cov_now.trace().re;
    let law = null_power_law(cfg, alpha, tau, mu, m_s);
    let state = if p_null < law.threshold {
        stored_label
    } else {
        stored_label.reversed()
    };
    let snr = (mu / (m_s as f64 * cfg.sigma_w2) - 1.0).max(0.0);
    let error_prob = analytic_error_prob(cfg, alpha, tau, 0.5, 0.5, snr, m_s, m_p);
    StateEstimate {
        state,
        p_null,
        threshold: law.threshold,
        error_prob,
    }
}

/// Probability of labelling the transmitter wrongly, given priors `pi1`
/// (same transmitter as stored) and `pi2` (the other one).
#[allow(clippy::too_many_arguments)]
pub fn analytic_error_prob(
    cfg: &SensingConfig,
    alpha: f64,
    tau: u64,
    pi1: f64,
    pi2: f64,
    snr: f64,
    m_s: usize,
    m_p: usize,
) -> f64 {
    let s2 = cfg.sigma_w2;
    let n = cfg.n_samples as f64;
    let mu = m_s as f64 * s2 * (snr + 1.0);
    let law = null_power_law(cfg, alpha, tau, mu, m_s);
    let same = if law.sigma_p > 0.0 {
        q_function((law.threshold - law.mu_p) / law.sigma_p)
    } else {
        0.0
    };
    let p2 = cfg.pu_tx_power;
    let num = p2 + s2 + s2 / n;
    let den = p2 * p2 + s2 * s2 + s2 * s2 / (n * n);
    let kappa = (m_s * m_p) as f64 * num * num / den;
    let theta = den / num;
    let other = gamma_lower_regularized(kappa, law.threshold / theta);
    (pi1 * same + pi2 * other).clamp(0.0, 1.0)
}
