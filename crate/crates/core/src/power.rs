//! Transmit-power laws under an average interference constraint.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::traffic::{PuLinkState, TauDistribution, TrafficError, TrafficModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerError {
    #[error("power limits must be positive (p0 = {p0}, i0 = {i0})")]
    InvalidLimits { p0: f64, i0: f64 },
    #[error("primary antenna count must be at least 1")]
    NoPrimaryAntennas,
    #[error(transparent)]
    Traffic(#[from] TrafficError),
}

/// Peak power `p0`, interference budget `i0` (both linear, noise = 1) and the
/// number of primary antennas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLimits {
    pub p0: f64,
    pub i0: f64,
    pub m_p: usize,
}

impl PowerLimits {
    pub fn new(p0: f64, i0: f64, m_p: usize) -> Result<Self, PowerError> {
        // i0 may be +inf (no interference constraint)
        if !(p0 > 0.0 && p0.is_finite() && i0 > 0.0 && !i0.is_nan()) {
            return Err(PowerError::InvalidLimits { p0, i0 });
        }
        if m_p == 0 {
            return Err(PowerError::NoPrimaryAntennas);
        }
        Ok(Self { p0, i0, m_p })
    }

    pub fn from_db(p0_db: f64, i0_db: f64, m_p: usize) -> Result<Self, PowerError> {
        Self::new(db_to_linear(p0_db), db_to_linear(i0_db), m_p)
    }

    /// min(i0 / (m_p * leak), p0); a zero leak factor leaves only the cap.
    fn capped(&self, leak: f64) -> f64 {
        if leak <= 0.0 {
            return self.p0;
        }
        (self.i0 / (self.m_p as f64 * leak)).min(self.p0)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// One band: its temporal correlation and primary traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    pub alpha: f64,
    pub traffic: TrafficModel,
}

impl BandConfig {
    pub fn new(alpha: f64, traffic: TrafficModel) -> Result<Self, TrafficError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(TrafficError::InvalidAlpha(alpha));
        }
        Ok(Self { alpha, traffic })
    }

    pub fn builtin(alpha: f64, config: u32) -> Result<Self, TrafficError> {
        Self::new(alpha, TrafficModel::builtin(config)?)
    }

    pub fn fixed_power(&self, limits: &PowerLimits) -> Result<f64, TrafficError> {
        fixed_power(limits, self.alpha, &self.traffic)
    }

    pub fn tau_distribution(&self) -> Result<TauDistribution, TrafficError> {
        self.traffic.tau_distribution()
    }
}

/// Largest constant power meeting the interference budget on average.
pub fn fixed_power(
    limits: &PowerLimits,
    alpha: f64,
    model: &TrafficModel,
) -> Result<f64, TrafficError> {
    Ok(limits.capped(model.g_factor(alpha)?))
}

/// Largest power meeting the budget in a slot whose null space is `tau` old.
pub fn dynamic_power(limits: &PowerLimits, alpha: f64, tau: u64) -> f64 {
    limits.capped(1.0 - alpha.powf(2.0 * tau as f64))
}

/// Power for one slot: full power when the primaries are silent, else the
/// fixed or dynamic law.
pub fn slot_power(
    use_dynamic: bool,
    limits: &PowerLimits,
    alpha: f64,
    model: &TrafficModel,
    tau: u64,
    pu_state: PuLinkState,
) -> Result<f64, TrafficError> {
    if !pu_state.is_active() {
        return Ok(limits.p0);
    }
    if use_dynamic {
        Ok(dynamic_power(limits, alpha, tau))
    } else {
        fixed_power(limits, alpha, model)
    }
}
