//! Gauss-Markov MIMO channels for one band.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{blend_gaussian, gaussian_complex, ComplexMatrix};
use crate::special::bessel_j0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("need more secondary antennas than primary ones (m_s = {m_s}, m_p = {m_p})")]
    BadDims { m_s: usize, m_p: usize },
    #[error("temporal correlation {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("invalid Doppler spec: f_d = {f_d}, t_slot = {t_slot}")]
    InvalidDoppler { f_d: f64, t_slot: f64 },
}

/// First positive zero of J0.
const J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DopplerSpec {
    /// Maximum Doppler shift, Hz.
    pub f_d: f64,
    /// Slot duration, seconds.
    pub t_slot: f64,
}

/// alpha = J0(2 pi f_d T_slot).
pub fn alpha_from_doppler(spec: DopplerSpec) -> Result<f64, ChannelError> {
    if !(spec.f_d >= 0.0 && spec.f_d.is_finite() && spec.t_slot > 0.0 && spec.t_slot.is_finite()) {
        return Err(ChannelError::InvalidDoppler {
            f_d: spec.f_d,
            t_slot: spec.t_slot,
        });
    }
    let arg = 2.0 * std::f64::consts::PI * spec.f_d * spec.t_slot;
    if arg >= J0_FIRST_ZERO {
        log::warn!(
            "f_d * t_slot = {} is past the first zero of J0; correlation is no longer monotone",
            spec.f_d * spec.t_slot
        );
    }
    Ok(bessel_j0(arg))
}

/// All channels of one band: `h` between the two secondaries, `g[i][j]`
/// between primary i and secondary j (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct BandChannels {
    pub h: ComplexMatrix,
    pub g: [[ComplexMatrix; 2]; 2],
    pub alpha: f64,
}

impl BandChannels {
    pub fn init<R: Rng + ?Sized>(
        m_s: usize,
        m_p: usize,
        alpha: f64,
        rng: &mut R,
    ) -> Result<Self, ChannelError> {
        check_dims(m_s, m_p)?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(ChannelError::InvalidAlpha(alpha));
        }
        let h = gaussian_complex(m_s, m_s, rng);
        let g11 = gaussian_complex(m_s, m_p, rng);
        let g12 = gaussian_complex(m_s, m_p, rng);
        let g21 = gaussian_complex(m_s, m_p, rng);
        let g22 = gaussian_complex(m_s, m_p, rng);
        Ok(Self {
            h,
            g: [[g11, g12], [g21, g22]],
            alpha,
        })
    }

    pub fn m_s(&self) -> usize {
        self.h.rows()
    }

    pub fn m_p(&self) -> usize {
        self.g[0][0].cols()
    }

    /// Channel between primary `pu` and secondary `su` (both 0-based).
    pub fn g(&self, pu: usize, su: usize) -> &ComplexMatrix {
        &self.g[pu][su]
    }

    /// Advance one slot: X <- alpha X + sqrt(1 - alpha^2) dX.
    ///
    /// Innovations are drawn even when alpha = 1 so the random stream is
    /// consumed identically for every alpha.
    pub fn evolve<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let mut next = self.clone();
        next.evolve_in_place(rng);
        next
    }

    pub fn evolve_in_place<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let a = self.alpha;
        let b = (1.0 - a * a).max(0.0).sqrt();
        blend_gaussian(&mut self.h, a, b, rng);
        for g in self.g.iter_mut().flatten() {
            blend_gaussian(g, a, b, rng);
        }
    }
}

pub fn check_dims(m_s: usize, m_p: usize) -> Result<(), ChannelError> {
    if m_p == 0 || m_s <= m_p {
        return Err(ChannelError::BadDims { m_s, m_p });
    }
    Ok(())
}
