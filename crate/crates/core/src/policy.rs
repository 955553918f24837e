//! Band-selection policies.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::power::{BandConfig, PowerLimits};
use crate::traffic::{PuLinkState, TrafficError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("band {band} has no null space for the current receiver yet")]
    NoNullSpaceYet { band: usize },
    #[error("reversal time is undefined while the primary link is silent")]
    LinkSilent,
    #[error("clairvoyant policy needs per-band candidate rates")]
    MissingObservation,
    #[error("candidate rates cover {got} bands, expected {expected}")]
    ObservationSize { expected: usize, got: usize },
    #[error("band index {band} out of range for {n_bands} bands")]
    BadBand { band: usize, n_bands: usize },
    #[error("at least one band is required")]
    NoBands,
    #[error("unknown policy '{0}'")]
    UnknownPolicy(String),
    #[error("invalid DSEE parameters: {0}")]
    InvalidDsee(String),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Fbfp,
    Fbdp,
    Random,
    RoundRobin,
    Dsee,
    Clairvoyant,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Fbfp,
        PolicyKind::Fbdp,
        PolicyKind::Random,
        PolicyKind::RoundRobin,
        PolicyKind::Dsee,
        PolicyKind::Clairvoyant,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Fbfp => "fbfp",
            PolicyKind::Fbdp => "fbdp",
            PolicyKind::Random => "random",
            PolicyKind::RoundRobin => "round_robin",
            PolicyKind::Dsee => "dsee",
            PolicyKind::Clairvoyant => "clairvoyant",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, PolicyError> {
        let norm = name.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == norm || (norm == "roundrobin" && *k == PolicyKind::RoundRobin))
            .ok_or_else(|| PolicyError::UnknownPolicy(name.to_string()))
    }

    pub fn uses_dynamic_power(self) -> bool {
        matches!(self, PolicyKind::Fbdp | PolicyKind::Clairvoyant)
    }

    pub fn is_fixed_band(self) -> bool {
        matches!(self, PolicyKind::Fbfp | PolicyKind::Fbdp)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DseeParams {
    /// Length, in slots per band, of the first exploration epoch and of the
    /// first exploitation epoch.
    pub base_epoch_len: u64,
    /// Geometric growth of epoch lengths.
    pub growth: f64,
    /// Explore while per-band exploration slots < constant * ln(t).
    pub exploration_constant: f64,
}

impl Default for DseeParams {
    fn default() -> Self {
        Self {
            base_epoch_len: 1,
            growth: 2.0,
            exploration_constant: 1.0,
        }
    }
}

impl DseeParams {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.base_epoch_len < 1 {
            return Err(PolicyError::InvalidDsee(
                "base_epoch_len must be >= 1".into(),
            ));
        }
        if !(self.growth > 1.0 && self.growth.is_finite()) {
            return Err(PolicyError::InvalidDsee("growth must be > 1".into()));
        }
        if !(self.exploration_constant > 0.0 && self.exploration_constant.is_finite()) {
            return Err(PolicyError::InvalidDsee(
                "exploration_constant must be > 0".into(),
            ));
        }
        Ok(())
    }

    fn epoch_len(&self, k: u32) -> u64 {
        let len = self.base_epoch_len as f64 * self.growth.powi(k as i32);
        len.round().clamp(1.0, 1e15) as u64
    }
}

/// A policy and its parameters. DSEE is the only policy with parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicySpec {
    Fbfp,
    Fbdp,
    Random,
    RoundRobin,
    Dsee(DseeParams),
    Clairvoyant,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind, dsee: Option<DseeParams>) -> Result<Self, PolicyError> {
        Ok(match kind {
            PolicyKind::Fbfp => PolicySpec::Fbfp,
            PolicyKind::Fbdp => PolicySpec::Fbdp,
            PolicyKind::Random => PolicySpec::Random,
            PolicyKind::RoundRobin => PolicySpec::RoundRobin,
            PolicyKind::Dsee => {
                let p = dsee.unwrap_or_default();
                p.validate()?;
                PolicySpec::Dsee(p)
            }
            PolicyKind::Clairvoyant => PolicySpec::Clairvoyant,
        })
    }

    /// Default parameters for `kind`.
    pub fn of(kind: PolicyKind) -> Self {
        Self::new(kind, None).expect("default DSEE parameters are valid")
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            PolicySpec::Fbfp => PolicyKind::Fbfp,
            PolicySpec::Fbdp => PolicyKind::Fbdp,
            PolicySpec::Random => PolicyKind::Random,
            PolicySpec::RoundRobin => PolicyKind::RoundRobin,
            PolicySpec::Dsee(_) => PolicyKind::Dsee,
            PolicySpec::Clairvoyant => PolicyKind::Clairvoyant,
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind().name()
    }
}

/// Band with the largest fixed power; ties go to the lowest index.
pub fn select_fixed_band(bands: &[BandConfig], limits: &PowerLimits) -> Result<usize, PolicyError> {
    let mut best: Option<(usize, f64)> = None;
    for (f, band) in bands.iter().enumerate() {
        let p = band.fixed_power(limits)?;
        if best.is_none_or(|(_, bp)| p > bp) {
            best = Some((f, p));
        }
    }
    best.map(|(f, _)| f).ok_or(PolicyError::NoBands)
}

/// What the policy may look at before choosing.
#[derive(Debug, Clone, Copy, Default)]
pub struct Observation<'a> {
    /// Achievable rate on every band this slot (clairvoyant only).
    pub candidate_rates: Option<&'a [f64]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub band: usize,
    pub use_dynamic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Explore {
        band: usize,
        left: u64,
        per_band: u64,
    },
    Exploit {
        band: usize,
        left: u64,
    },
}

#[derive(Debug, Clone)]
struct Dsee {
    params: DseeParams,
    phase: Phase,
    explore_epochs: u32,
    exploit_epochs: u32,
    explore_slots_per_band: u64,
    sums: Vec<f64>,
    counts: Vec<u64>,
    exploring_now: bool,
}

impl Dsee {
    fn new(params: DseeParams, n_bands: usize) -> Self {
        Self {
            params,
            phase: Phase::Idle,
            explore_epochs: 0,
            exploit_epochs: 0,
            explore_slots_per_band: 0,
            sums: vec![0.0; n_bands],
            counts: vec![0; n_bands],
            exploring_now: false,
        }
    }

    fn best_band(&self) -> usize {
        let mut best = 0;
        let mut best_mean = f64::NEG_INFINITY;
        for (f, (&s, &c)) in self.sums.iter().zip(&self.counts).enumerate() {
            let m = if c == 0 {
                f64::NEG_INFINITY
            } else {
                s / c as f64
            };
            if m > best_mean {
                best_mean = m;
                best = f;
            }
        }
        best
    }

    fn start_epoch(&mut self, t: u64) {
        let want = self.params.exploration_constant * (t as f64).ln();
        if self.explore_epochs == 0 || (self.explore_slots_per_band as f64) < want {
            let per_band = self.params.epoch_len(self.explore_epochs);
            self.explore_epochs += 1;
            self.phase = Phase::Explore {
                band: 0,
                left: per_band,
                per_band,
            };
        } else {
            let len = self.params.epoch_len(self.exploit_epochs);
            self.exploit_epochs += 1;
            self.phase = Phase::Exploit {
                band: self.best_band(),
                left: len,
            };
        }
    }

    fn select(&mut self, t: u64) -> usize {
        if self.phase == Phase::Idle {
            self.start_epoch(t);
        }
        let n_bands = self.sums.len();
        match self.phase {
            Phase::Explore {
                band,
                left,
                per_band,
            } => {
                self.exploring_now = true;
                self.phase = if left > 1 {
                    Phase::Explore {
                        band,
                        left: left - 1,
                        per_band,
                    }
                } else if band + 1 < n_bands {
                    Phase::Explore {
                        band: band + 1,
                        left: per_band,
                        per_band,
                    }
                } else {
                    self.explore_slots_per_band += per_band;
                    Phase::Idle
                };
                band
            }
            Phase::Exploit { band, left } => {
                self.exploring_now = false;
                self.phase = if left > 1 {
                    Phase::Exploit {
                        band,
                        left: left - 1,
                    }
                } else {
                    Phase::Idle
                };
                band
            }
            Phase::Idle => unreachable!("an epoch was just started"),
        }
    }

    fn observe(&mut self, band: usize, reward: f64) {
        if self.exploring_now {
            self.sums[band] += reward;
            self.counts[band] += 1;
        }
    }
}

/// Mutable per-run state of one policy.
#[derive(Debug, Clone)]
pub struct PolicyState {
    spec: PolicySpec,
    n_bands: usize,
    slot: u64,
    visits: Vec<u64>,
    fixed_band: usize,
    rng: ChaCha8Rng,
    /// Slot at which each primary's transmit-side null space was last captured.
    captures: Vec<[Option<u64>; 2]>,
    dsee: Option<Dsee>,
}

impl PolicyState {
    pub fn new(
        spec: PolicySpec,
        bands: &[BandConfig],
        limits: &PowerLimits,
        rng: ChaCha8Rng,
    ) -> Result<Self, PolicyError> {
        if bands.is_empty() {
            return Err(PolicyError::NoBands);
        }
        let n_bands = bands.len();
        let fixed_band = select_fixed_band(bands, limits)?;
        let dsee = match spec {
            PolicySpec::Dsee(p) => {
                p.validate()?;
                Some(Dsee::new(p, n_bands))
            }
            _ => None,
        };
        Ok(Self {
            spec,
            n_bands,
            slot: 0,
            visits: vec![0; n_bands],
            fixed_band,
            rng,
            captures: vec![[None; 2]; n_bands],
            dsee,
        })
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn slot_index(&self) -> u64 {
        self.slot
    }

    pub fn visits(&self) -> &[u64] {
        &self.visits
    }

    pub fn fixed_band(&self) -> usize {
        self.fixed_band
    }

    /// Choose the band for the current slot.
    pub fn select(&mut self, obs: &Observation) -> Result<Decision, PolicyError> {
        let kind = self.spec.kind();
        let band = match kind {
            PolicyKind::Fbfp | PolicyKind::Fbdp => self.fixed_band,
            PolicyKind::Random => self.rng.random_range(0..self.n_bands),
            PolicyKind::RoundRobin => (self.slot % self.n_bands as u64) as usize,
            PolicyKind::Dsee => {
                let t = self.slot + 1;
                self.dsee.as_mut().expect("DSEE state").select(t)
            }
            PolicyKind::Clairvoyant => {
                let rates = obs.candidate_rates.ok_or(PolicyError::MissingObservation)?;
                if rates.len() != self.n_bands {
                    return Err(PolicyError::ObservationSize {
                        expected: self.n_bands,
                        got: rates.len(),
                    });
                }
                argmax(rates)
            }
        };
        Ok(Decision {
            band,
            use_dynamic: kind.uses_dynamic_power(),
        })
    }

    /// Close the current slot: count the visit and feed the reward back.
    pub fn complete_slot(&mut self, band: usize, reward: f64) -> Result<(), PolicyError> {
        if band >= self.n_bands {
            return Err(PolicyError::BadBand {
                band,
                n_bands: self.n_bands,
            });
        }
        if let Some(d) = self.dsee.as_mut() {
            d.observe(band, reward);
        }
        self.visits[band] += 1;
        self.slot += 1;
        Ok(())
    }

    /// The secondary captured primary `transmitter`'s null space on `band`
    /// during the current slot.
    pub fn record_capture(&mut self, band: usize, transmitter: usize) {
        self.captures[band][transmitter] = Some(self.slot);
    }

    pub fn capture_slot(&self, band: usize, transmitter: usize) -> Option<u64> {
        self.captures[band][transmitter]
    }

    /// Age of the null space that protects the current receiver on `band`.
    pub fn effective_tau(
        &self,
        band: usize,
        pu_state_now: PuLinkState,
    ) -> Result<u64, PolicyError> {
        let tx = pu_state_now.transmitter().ok_or(PolicyError::LinkSilent)?;
        let receiver = 1 - tx;
        let at = self.captures[band][receiver].ok_or(PolicyError::NoNullSpaceYet { band })?;
        Ok(self.slot - at)
    }
}

/// Largest entry; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// One step of `state` under its own policy.
pub fn step_policy(state: &mut PolicyState, obs: &Observation) -> Result<Decision, PolicyError> {
    state.select(obs)
}
