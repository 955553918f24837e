//! Markov model of the primary link: who transmits in each slot, how long
//! it takes the link to reverse, and the resulting staleness factor.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrafficError {
    #[error("unknown traffic configuration {0} (expected 0..=6)")]
    UnknownConfig(u32),
    #[error("transition row {row} sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("transition entry ({row}, {col}) = {value} is not a probability")]
    InvalidEntry { row: usize, col: usize, value: f64 },
    #[error("transition matrix has no unique steady state")]
    NoUniqueSteadyState,
    #[error("primary link is never active under this traffic model")]
    NeverActive,
    #[error("reversal-time tail still above tolerance at {i_max} slots")]
    TailTooHeavy { i_max: usize },
    #[error("correlation coefficient {0} outside (0, 1]")]
    InvalidAlpha(f64),
}

/// State of the primary link in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PuLinkState {
    Silent = 0,
    Pu1Tx = 1,
    Pu2Tx = 2,
}

impl PuLinkState {
    pub const ALL: [PuLinkState; 3] = [PuLinkState::Silent, PuLinkState::Pu1Tx, PuLinkState::Pu2Tx];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_active(self) -> bool {
        self != PuLinkState::Silent
    }

    /// The other transmit direction; `Silent` maps to itself.
    pub fn reversed(self) -> Self {
        match self {
            PuLinkState::Silent => PuLinkState::Silent,
            PuLinkState::Pu1Tx => PuLinkState::Pu2Tx,
            PuLinkState::Pu2Tx => PuLinkState::Pu1Tx,
        }
    }

    /// 0 for PU-1, 1 for PU-2; `None` when silent.
    pub fn transmitter(self) -> Option<usize> {
        match self {
            PuLinkState::Silent => None,
            PuLinkState::Pu1Tx => Some(0),
            PuLinkState::Pu2Tx => Some(1),
        }
    }
}

/// Number of LTE TDD uplink/downlink configurations shipped as builtins.
pub const BUILTIN_COUNT: u32 = 7;

const ROW_SUM_TOL: f64 = 1e-9;
const TAU_TAIL: f64 = 1e-9;
const TAU_CAP: usize = 10_000;

/// Row-stochastic 3x3 transition matrix with its stationary distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct TrafficModel {
    transition: [[f64; 3]; 3],
    steady_state: [f64; 3],
}

impl TryFrom<[[f64; 3]; 3]> for TrafficModel {
    type Error = TrafficError;
    fn try_from(m: [[f64; 3]; 3]) -> Result<Self, Self::Error> {
        TrafficModel::new(m)
    }
}

impl From<TrafficModel> for [[f64; 3]; 3] {
    fn from(m: TrafficModel) -> Self {
        m.transition
    }
}

impl TrafficModel {
    /// Validate and normalize a transition matrix.
    ///
    /// Rows must sum to 1 within 1e-9; they are then rescaled so the sum is
    /// exact to rounding.
    pub fn new(mut transition: [[f64; 3]; 3]) -> Result<Self, TrafficError> {
        for (r, row) in transition.iter_mut().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(TrafficError::InvalidEntry {
                        row: r,
                        col: c,
                        value: v,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(TrafficError::NotStochastic { row: r, sum });
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
        let steady_state = solve_steady_state(&transition)?;
        Ok(Self {
            transition,
            steady_state,
        })
    }

    /// One of the seven builtin configurations.
    ///
    /// Entries printed as two-decimal values (0.67, 0.33, 0.17, 0.83, 0.14,
    /// 0.86) are the fractions 2/3, 1/3, 1/6, 5/6, 1/7, 6/7 they round from.
    pub fn builtin(id: u32) -> Result<Self, TrafficError> {
        const T: f64 = 1.0 / 3.0;
        let m = match id {
            0 => [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 0.2, 0.8]],
            1 => [[0.0, 0.0, 1.0], [2.0 * T, T, 0.0], [0.0, 0.5, 0.5]],
            2 => [[0.0, 0.0, 1.0], [0.4, 0.6, 0.0], [0.0, 1.0, 0.0]],
            3 => [[0.0, 0.0, 1.0], [0.2, 0.8, 0.0], [0.0, T, 2.0 * T]],
            4 => [
                [0.0, 0.0, 1.0],
                [1.0 / 6.0, 5.0 / 6.0, 0.0],
                [0.0, 0.5, 0.5],
            ],
            5 => [
                [0.0, 0.0, 1.0],
                [1.0 / 7.0, 6.0 / 7.0, 0.0],
                [0.0, 1.0, 0.0],
            ],
            6 => [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 0.4, 0.6]],
            _ => return Err(TrafficError::UnknownConfig(id)),
        };
        Self::new(m)
    }

    pub fn transition(&self) -> &[[f64; 3]; 3] {
        &self.transition
    }

    pub fn steady_state(&self) -> [f64; 3] {
        self.steady_state
    }

    pub fn prob(&self, from: PuLinkState, to: PuLinkState) -> f64 {
        self.transition[from.index()][to.index()]
    }

    /// Fraction of slots in which the primary link is active.
    pub fn activity(&self) -> f64 {
        self.steady_state[1] + self.steady_state[2]
    }

    pub fn step<R: Rng + ?Sized>(&self, s: PuLinkState, rng: &mut R) -> PuLinkState {
        sample_row(&self.transition[s.index()], rng)
    }

    pub fn sample_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> PuLinkState {
        sample_row(&self.steady_state, rng)
    }

    /// Probability of reaching `to` from `from` in `steps` slots without
    /// visiting `avoid` (endpoints included).
    pub fn taboo_prob(
        &self,
        from: PuLinkState,
        to: PuLinkState,
        avoid: PuLinkState,
        steps: usize,
    ) -> f64 {
        let t = self.taboo_matrix(avoid);
        let mut row = [0.0; 3];
        if from != avoid {
            row[from.index()] = 1.0;
        }
        for _ in 0..steps {
            row = vec_mat(&row, &t);
        }
        row[to.index()]
    }

    fn taboo_matrix(&self, avoid: PuLinkState) -> [[f64; 3]; 3] {
        let mut t = self.transition;
        let a = avoid.index();
        for k in 0..3 {
            t[a][k] = 0.0;
            t[k][a] = 0.0;
        }
        t
    }

    /// Distribution of the link-reversal time: slots elapsed since the
    /// opposite direction last transmitted, seen from an active slot.
    pub fn tau_distribution(&self) -> Result<TauDistribution, TrafficError> {
        let pi = self.steady_state;
        let active = pi[1] + pi[2];
        if active <= 1e-15 {
            return Err(TrafficError::NeverActive);
        }
        // r2: leave PU-2 state, reach PU-1 avoiding PU-2; r1 symmetric.
        let t2 = self.taboo_matrix(PuLinkState::Pu2Tx);
        let t1 = self.taboo_matrix(PuLinkState::Pu1Tx);
        let mut r2 = [self.transition[2][0], self.transition[2][1], 0.0];
        let mut r1 = [self.transition[1][0], 0.0, self.transition[1][2]];
        let mut probs = Vec::new();
        let mut cumulative = 0.0;
        loop {
            let p = (pi[2] * r2[1] + pi[1] * r1[2]) / active;
            probs.push(p);
            cumulative += p;
            if cumulative >= 1.0 - TAU_TAIL {
                break;
            }
            if probs.len() >= TAU_CAP {
                return Err(TrafficError::TailTooHeavy { i_max: TAU_CAP });
            }
            r2 = vec_mat(&r2, &t2);
            r1 = vec_mat(&r1, &t1);
        }
        Ok(TauDistribution {
            probs,
            tail_mass: (1.0 - cumulative).max(0.0),
            activity: active,
        })
    }

    /// E[1 - alpha^(2 tau)] over the reversal-time distribution.
    pub fn g_factor(&self, alpha: f64) -> Result<f64, TrafficError> {
        self.tau_distribution()?.g_factor(alpha)
    }
}

/// Pr(tau = i) for i = 1..=i_max, conditioned on an active slot.
#[derive(Debug, Clone, PartialEq)]
pub struct TauDistribution {
    probs: Vec<f64>,
    tail_mass: f64,
    activity: f64,
}

impl TauDistribution {
    /// `probs()[k]` is Pr(tau = k + 1).
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn i_max(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.probs.get(i - 1).copied().unwrap_or(0.0)
        }
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// E[f(tau)] over the truncated support.
    pub fn expect<F: Fn(usize) -> f64>(&self, f: F) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| p * f(k + 1))
            .sum()
    }

    /// Mean reversal time given the link is active.
    pub fn mean(&self) -> f64 {
        self.expect(|i| i as f64)
    }

    /// Reversal-time moment weighted by the active fraction,
    /// sum_i i * Pr(tau = i, link active). This is the figure tabulated for
    /// the builtin configurations.
    pub fn activity_weighted_mean(&self) -> f64 {
        self.activity * self.mean()
    }

    pub fn g_factor(&self, alpha: f64) -> Result<f64, TrafficError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(TrafficError::InvalidAlpha(alpha));
        }
        let a2 = alpha * alpha;
        Ok(self.expect(|i| 1.0 - a2.powi(i as i32)))
    }

    /// Draw a reversal time (truncated support, renormalized).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = 1.0 - self.tail_mass;
        let mut u = rng.random::<f64>() * total;
        for (k, &p) in self.probs.iter().enumerate() {
            if u < p {
                return k + 1;
            }
            u -= p;
        }
        self.probs.len()
    }
}

fn vec_mat(v: &[f64; 3], m: &[[f64; 3]; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (k, &vk) in v.iter().enumerate() {
        for l in 0..3 {
            out[l] += vk * m[k][l];
        }
    }
    out
}

fn sample_row<R: Rng + ?Sized>(row: &[f64; 3], rng: &mut R) -> PuLinkState {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return PuLinkState::ALL[k];
        }
    }
    // rounding left u at or above the last partial sum
    let last = row.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    PuLinkState::ALL[last]
}

fn solve_steady_state(t: &[[f64; 3]; 3]) -> Result<[f64; 3], TrafficError> {
    // (T^T - I) pi = 0 with the last equation replaced by sum(pi) = 1
    let mut a = Matrix3::from_fn(|r, c| t[c][r] - if r == c { 1.0 } else { 0.0 });
    for c in 0..3 {
        a[(2, c)] = 1.0;
    }
    let b = Vector3::new(0.0, 0.0, 1.0);
    let lu = a.lu();
    let x = lu.solve(&b).ok_or(TrafficError::NoUniqueSteadyState)?;
    let mut pi = [x[0], x[1], x[2]];
    if pi.iter().any(|v| !v.is_finite() || *v < -1e-9) {
        return Err(TrafficError::NoUniqueSteadyState);
    }
    pi.iter_mut().for_each(|v| *v = v.max(0.0));
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= s);
    let back = vec_mat(&pi, t);
    if back.iter().zip(&pi).any(|(a, b)| (a - b).abs() > 1e-10) {
        return Err(TrafficError::NoUniqueSteadyState);
    }
    Ok(pi)
}
