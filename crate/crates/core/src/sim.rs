//! Slot-by-slot Monte Carlo of the secondary link over F bands.
//!
//! One trial owns one world (primary chains and channels on every band) and
//! any number of policy agents. All agents act on the same world realization,
//! which gives common random numbers across policies for free.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{BandChannels, ChannelError};
use crate::matrix::{top_singular_triplet, ComplexMatrix, MatrixError};
use crate::policy::{Observation, PolicyError, PolicyKind, PolicySpec, PolicyState};
use crate::power::{dynamic_power, BandConfig, PowerError, PowerLimits};
use crate::rng::{stream, Stream};
use crate::sensing::{
    asymptotic_covariance, detect_activity, estimate_pu_state, extract_null_space,
    sample_covariance, NullSpace, SensingConfig, SensingError,
};
use crate::traffic::{PuLinkState, TrafficError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Power(#[from] PowerError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> SimError {
    SimError::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

/// How the secondaries learn null spaces and the primary state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensingMode {
    /// Exact covariances and the true primary state.
    #[default]
    Ideal,
    /// N-sample covariances, energy detection and the stale-null-space test.
    FiniteN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub bands: Vec<BandConfig>,
    pub m_s: usize,
    pub m_p: usize,
    pub limits: PowerLimits,
    /// Fraction of the slot spent on data.
    pub t_frac: f64,
    pub sensing: SensingConfig,
    pub sensing_mode: SensingMode,
    pub n_slots: u64,
    pub n_trials: u64,
    pub master_seed: u64,
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.bands.is_empty() {
            return Err(invalid("bands", "at least one band is required"));
        }
        crate::channel::check_dims(self.m_s, self.m_p)?;
        if self.limits.m_p != self.m_p {
            return Err(invalid(
                "limits.m_p",
                format!("{} differs from m_p = {}", self.limits.m_p, self.m_p),
            ));
        }
        if !(self.t_frac > 0.0 && self.t_frac <= 1.0) {
            return Err(invalid("t_frac", format!("{} outside (0, 1]", self.t_frac)));
        }
        if self.n_slots == 0 {
            return Err(invalid("n_slots", "must be at least 1"));
        }
        if self.n_trials == 0 {
            return Err(invalid("n_trials", "must be at least 1"));
        }
        self.sensing.validate(self.m_s)?;
        for (f, b) in self.bands.iter().enumerate() {
            if !(b.alpha > 0.0 && b.alpha <= 1.0) {
                return Err(invalid(
                    "bands.alpha",
                    format!("band {f}: {} outside (0, 1]", b.alpha),
                ));
            }
            b.fixed_power(&self.limits)?;
        }
        Ok(())
    }
}

/// Age of the precoding null space in a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TauMark {
    /// The secondary believed the primaries silent.
    NotApplicable,
    /// No null space for the current receiver has been captured yet.
    WarmUp,
    Age(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub band: usize,
    pub pu_state: PuLinkState,
    /// What the secondary decided the primary state was.
    pub believed_state: PuLinkState,
    pub tau: TauMark,
    /// Slots since the current receiver last transmitted on this band.
    pub true_tau: Option<u64>,
    pub power: f64,
    pub gamma: f64,
    pub rate: f64,
    pub interference: f64,
    /// The precoder came from the wrong primary's null space.
    pub wrong_side: bool,
    /// The stale-null-space test picked the wrong hypothesis.
    pub misclassified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub policy: String,
    pub trial: u64,
    pub n_slots: u64,
    pub mean_rate: f64,
    /// Over non-warm-up slots with an active primary on the chosen band.
    pub mean_interference_active: Option<f64>,
    pub n_active_slots: u64,
    pub visits: Vec<u64>,
    pub warmup_slots: u64,
    pub wrong_side_slots: u64,
    pub misclassified_slots: u64,
    /// Mean precoder age over the same slots as the interference mean.
    pub mean_tau_active: Option<f64>,
}

/// t_frac * log2(1 + power * gamma).
pub fn link_rate(t_frac: f64, power: f64, gamma: f64) -> f64 {
    t_frac * (power * gamma).ln_1p() / std::f64::consts::LN_2
}

/// Equivalent channel after combining with `b` and precoding with `a`.
#[derive(Debug, Clone)]
pub struct Beamformed {
    pub h_eq: ComplexMatrix,
    /// Largest eigenvalue of h_eq^H h_eq.
    pub gamma: f64,
    /// Unit-norm transmit vector a * v_right.
    pub v: ComplexMatrix,
}

pub fn beamform(
    h: &ComplexMatrix,
    a: &ComplexMatrix,
    b: &ComplexMatrix,
) -> Result<Beamformed, MatrixError> {
    let h_eq = &(&b.adjoint() * h) * a;
    let t = top_singular_triplet(&h_eq)?;
    let v = a * &t.v;
    Ok(Beamformed {
        gamma: t.sigma_max * t.sigma_max,
        v,
        h_eq,
    })
}

/// Leakage P * ||g^H v||^2 into the primary behind `g`.
pub fn leakage(power: f64, g: &ComplexMatrix, v: &ComplexMatrix) -> f64 {
    power * (&g.adjoint() * v).norm_squared()
}

struct BandWorld {
    band: BandConfig,
    channels: BandChannels,
    state: PuLinkState,
    last_tx: [Option<u64>; 2],
    rng: ChaCha8Rng,
}

struct World {
    bands: Vec<BandWorld>,
    slot: u64,
}

impl World {
    fn new(cfg: &WorldConfig, trial: u64) -> Result<Self, SimError> {
        let mut bands = Vec::with_capacity(cfg.bands.len());
        for (f, b) in cfg.bands.iter().enumerate() {
            let mut rng = stream(cfg.master_seed, trial, f as u64, Stream::World);
            let state = b.traffic.sample_stationary(&mut rng);
            let channels = BandChannels::init(cfg.m_s, cfg.m_p, b.alpha, &mut rng)?;
            bands.push(BandWorld {
                band: b.clone(),
                channels,
                state,
                last_tx: [None; 2],
                rng,
            });
        }
        Ok(Self { bands, slot: 0 })
    }

    fn true_tau(&self, f: usize) -> Option<u64> {
        let b = &self.bands[f];
        let tx = b.state.transmitter()?;
        b.last_tx[1 - tx].map(|at| self.slot - at)
    }

    fn advance(&mut self) {
        for b in &mut self.bands {
            if let Some(tx) = b.state.transmitter() {
                b.last_tx[tx] = Some(self.slot);
            }
            b.state = b.band.traffic.step(b.state, &mut b.rng);
            b.channels.evolve_in_place(&mut b.rng);
        }
        self.slot += 1;
    }
}

struct Capture {
    slot: u64,
    null: NullSpace,
    /// Transmitter the secondary believed it was looking at.
    label: usize,
    /// Who was really transmitting (None if nobody was).
    true_tx: Option<usize>,
}

struct Outcome {
    record: SlotRecord,
    capture: Option<Capture>,
}

fn label_state(tx: usize) -> PuLinkState {
    if tx == 0 {
        PuLinkState::Pu1Tx
    } else {
        PuLinkState::Pu2Tx
    }
}

struct Agent {
    kind: PolicyKind,
    policy: PolicyState,
    sensing_rng: ChaCha8Rng,
    captures: Vec<[Option<Capture>; 2]>,
    fixed_power: Vec<f64>,
    acc: Accumulator,
}

/// Streams are keyed by policy kind so a policy sees the same randomness
/// whether it runs alone or next to others.
fn policy_key(kind: PolicyKind) -> u64 {
    1_000 + PolicyKind::ALL.iter().position(|&k| k == kind).unwrap_or(0) as u64
}

impl Agent {
    fn new(cfg: &WorldConfig, spec: PolicySpec, trial: u64) -> Result<Self, SimError> {
        let kind = spec.kind();
        let key = policy_key(kind);
        let policy = PolicyState::new(
            spec,
            &cfg.bands,
            &cfg.limits,
            stream(cfg.master_seed, trial, key, Stream::Policy),
        )?;
        let fixed_power = cfg
            .bands
            .iter()
            .map(|b| b.fixed_power(&cfg.limits))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            kind,
            policy,
            sensing_rng: stream(cfg.master_seed, trial, key, Stream::Sensing),
            captures: (0..cfg.bands.len()).map(|_| [None, None]).collect(),
            fixed_power,
            acc: Accumulator::new(spec.name(), trial, cfg.bands.len()),
        })
    }

    /// What would happen on band `f` this slot. Nothing is committed.
    fn evaluate(
        &mut self,
        cfg: &WorldConfig,
        world: &World,
        f: usize,
        genie: bool,
    ) -> Result<Outcome, SimError> {
        let bw = &world.bands[f];
        let ch = &bw.channels;
        let truth = bw.state;
        let ideal = genie || cfg.sensing_mode == SensingMode::Ideal;
        let zero = ComplexMatrix::zeros(cfg.m_s, cfg.m_p);
        let (g_tx1, g_tx2) = match truth.transmitter() {
            Some(k) => (ch.g(k, 0), ch.g(k, 1)),
            None => (&zero, &zero),
        };

        // covariances at the transmitting (1) and receiving (2) secondary
        let (cov1, cov2) = if ideal {
            (
                asymptotic_covariance(g_tx1, &cfg.sensing),
                asymptotic_covariance(g_tx2, &cfg.sensing),
            )
        } else {
            (
                sample_covariance(g_tx1, &cfg.sensing, &mut self.sensing_rng),
                sample_covariance(g_tx2, &cfg.sensing, &mut self.sensing_rng),
            )
        };

        let mut misclassified = false;
        let believed_tx = if ideal {
            truth.transmitter()
        } else if !detect_activity(&cov1, &cfg.sensing) {
            None
        } else {
            let latest = self.captures[f].iter().flatten().max_by_key(|c| c.slot);
            match latest {
                // nothing to compare against: the first label is free
                None => Some(truth.transmitter().unwrap_or(0)),
                Some(c) => {
                    let age = world.slot - c.slot;
                    let est = estimate_pu_state(
                        &c.null,
                        label_state(c.label),
                        &cov1,
                        &cfg.sensing,
                        bw.band.alpha,
                        age,
                    );
                    let said_same = est.state == label_state(c.label);
                    if let (Some(now), Some(then)) = (truth.transmitter(), c.true_tx) {
                        misclassified = said_same != (now == then);
                    }
                    est.state.transmitter()
                }
            }
        };

        let believed_state = believed_tx.map_or(PuLinkState::Silent, label_state);
        let mut record = SlotRecord {
            slot: world.slot,
            band: f,
            pu_state: truth,
            believed_state,
            tau: TauMark::NotApplicable,
            true_tau: world.true_tau(f),
            power: 0.0,
            gamma: 0.0,
            rate: 0.0,
            interference: 0.0,
            wrong_side: false,
            misclassified,
        };

        let (power, bf) = match believed_tx {
            None => {
                let eye = ComplexMatrix::identity(cfg.m_s);
                (cfg.limits.p0, beamform(&ch.h, &eye, &eye)?)
            }
            Some(k) => {
                let Some(stored) = &self.captures[f][1 - k] else {
                    record.tau = TauMark::WarmUp;
                    let capture = self.capture(&cov1, cfg.m_p, f, world.slot, k, truth)?;
                    return Ok(Outcome {
                        record,
                        capture: Some(capture),
                    });
                };
                let tau = world.slot - stored.slot;
                record.tau = TauMark::Age(tau);
                record.wrong_side = match truth.transmitter() {
                    Some(now) => stored.true_tx != Some(1 - now),
                    None => false,
                };
                let b = extract_null_space(&cov2, cfg.m_p, f)?.basis;
                let power = if self.kind.uses_dynamic_power() {
                    dynamic_power(&cfg.limits, bw.band.alpha, tau)
                } else {
                    self.fixed_power[f]
                };
                (power, beamform(&ch.h, &stored.null.basis, &b)?)
            }
        };

        record.power = power;
        record.gamma = bf.gamma;
        record.rate = link_rate(cfg.t_frac, power, bf.gamma);
        if let Some(now) = truth.transmitter() {
            record.interference = leakage(power, ch.g(1 - now, 0), &bf.v);
        }
        let capture = match believed_tx {
            Some(k) => Some(self.capture(&cov1, cfg.m_p, f, world.slot, k, truth)?),
            None => None,
        };
        Ok(Outcome { record, capture })
    }

    fn capture(
        &self,
        cov1: &ComplexMatrix,
        m_p: usize,
        f: usize,
        slot: u64,
        label: usize,
        truth: PuLinkState,
    ) -> Result<Capture, SimError> {
        Ok(Capture {
            slot,
            null: extract_null_space(cov1, m_p, f)?,
            label,
            true_tx: truth.transmitter(),
        })
    }

    fn store(&mut self, f: usize, capture: Option<Capture>) {
        if let Some(c) = capture {
            self.policy.record_capture(f, c.label);
            let label = c.label;
            self.captures[f][label] = Some(c);
        }
    }

    fn step(
        &mut self,
        cfg: &WorldConfig,
        world: &World,
        sink: &mut Option<&mut dyn FnMut(usize, &SlotRecord)>,
        index: usize,
    ) -> Result<(), SimError> {
        let record = if self.kind == PolicyKind::Clairvoyant {
            // senses every band, so every band's null spaces stay fresh
            let mut outcomes = Vec::with_capacity(cfg.bands.len());
            for f in 0..cfg.bands.len() {
                outcomes.push(self.evaluate(cfg, world, f, true)?);
            }
            let rates: Vec<f64> = outcomes.iter().map(|o| o.record.rate).collect();
            let d = self.policy.select(&Observation {
                candidate_rates: Some(&rates),
            })?;
            let mut chosen = None;
            for (f, o) in outcomes.into_iter().enumerate() {
                if f == d.band {
                    chosen = Some(o.record);
                }
                self.store(f, o.capture);
            }
            chosen.expect("selected band is in range")
        } else {
            let d = self.policy.select(&Observation::default())?;
            let o = self.evaluate(cfg, world, d.band, false)?;
            self.store(d.band, o.capture);
            o.record
        };
        self.policy.complete_slot(record.band, record.rate)?;
        self.acc.push(&record);
        if let Some(s) = sink.as_mut() {
            s(index, &record);
        }
        Ok(())
    }
}

/// Folds slot records into a [`TrialSummary`].
#[derive(Debug, Clone)]
pub struct Accumulator {
    policy: String,
    trial: u64,
    n_slots: u64,
    rate_sum: f64,
    interference_sum: f64,
    tau_sum: f64,
    n_active: u64,
    visits: Vec<u64>,
    warmup: u64,
    wrong_side: u64,
    misclassified: u64,
}

impl Accumulator {
    pub fn new(policy: &str, trial: u64, n_bands: usize) -> Self {
        Self {
            policy: policy.to_string(),
            trial,
            n_slots: 0,
            rate_sum: 0.0,
            interference_sum: 0.0,
            tau_sum: 0.0,
            n_active: 0,
            visits: vec![0; n_bands],
            warmup: 0,
            wrong_side: 0,
            misclassified: 0,
        }
    }

    pub fn push(&mut self, r: &SlotRecord) {
        self.n_slots += 1;
        self.rate_sum += r.rate;
        self.visits[r.band] += 1;
        self.wrong_side += r.wrong_side as u64;
        self.misclassified += r.misclassified as u64;
        match r.tau {
            TauMark::WarmUp => self.warmup += 1,
            _ if r.pu_state.is_active() => {
                self.n_active += 1;
                self.interference_sum += r.interference;
                if let TauMark::Age(t) = r.tau {
                    self.tau_sum += t as f64;
                }
            }
            _ => {}
        }
    }

    pub fn summary(&self) -> TrialSummary {
        let per_active = |x: f64| (self.n_active > 0).then(|| x / self.n_active as f64);
        TrialSummary {
            policy: self.policy.clone(),
            trial: self.trial,
            n_slots: self.n_slots,
            mean_rate: if self.n_slots > 0 {
                self.rate_sum / self.n_slots as f64
            } else {
                0.0
            },
            mean_interference_active: per_active(self.interference_sum),
            n_active_slots: self.n_active,
            visits: self.visits.clone(),
            warmup_slots: self.warmup,
            wrong_side_slots: self.wrong_side,
            misclassified_slots: self.misclassified,
            mean_tau_active: per_active(self.tau_sum),
        }
    }
}

/// Run one trial of every policy in `specs` on a shared world. `sink`, if
/// given, sees every slot record together with the policy's index.
pub fn run_trial(
    cfg: &WorldConfig,
    specs: &[PolicySpec],
    trial: u64,
    mut sink: Option<&mut dyn FnMut(usize, &SlotRecord)>,
) -> Result<Vec<TrialSummary>, SimError> {
    cfg.validate()?;
    let mut world = World::new(cfg, trial)?;
    let mut agents = specs
        .iter()
        .map(|&s| Agent::new(cfg, s, trial))
        .collect::<Result<Vec<_>, _>>()?;
    for t in 0..cfg.n_slots {
        if t > 0 {
            world.advance();
        }
        for (i, a) in agents.iter_mut().enumerate() {
            a.step(cfg, &world, &mut sink, i)?;
        }
    }
    Ok(agents.iter().map(|a| a.acc.summary()).collect())
}

/// Mean with its standard error across trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    /// NaN with fewer than two samples.
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                stderr: f64::NAN,
                n,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n < 2 {
            f64::NAN
        } else {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Self { mean, stderr, n }
    }
}

/// Per-policy trial summaries on coupled realizations.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub policies: Vec<String>,
    /// `trials[p][t]`: policy `p`, trial `t`.
    pub trials: Vec<Vec<TrialSummary>>,
}

impl Comparison {
    pub fn rate(&self, p: usize) -> Estimate {
        Estimate::from_samples(
            &self.trials[p]
                .iter()
                .map(|s| s.mean_rate)
                .collect::<Vec<_>>(),
        )
    }

    pub fn interference(&self, p: usize) -> Estimate {
        let xs: Vec<f64> = self.trials[p]
            .iter()
            .filter_map(|s| s.mean_interference_active)
            .collect();
        Estimate::from_samples(&xs)
    }

    /// Trial-paired rate difference `a - b`.
    pub fn rate_difference(&self, a: usize, b: usize) -> Estimate {
        let d: Vec<f64> = self.trials[a]
            .iter()
            .zip(&self.trials[b])
            .map(|(x, y)| x.mean_rate - y.mean_rate)
            .collect();
        Estimate::from_samples(&d)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.policies.iter().position(|p| p == name)
    }
}

/// Run all policies for `n_trials` trials. Trials run in parallel on the
/// current rayon pool; results do not depend on the thread count.
pub fn compare_policies(cfg: &WorldConfig, specs: &[PolicySpec]) -> Result<Comparison, SimError> {
    cfg.validate()?;
    let per_trial = (0..cfg.n_trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, specs, t, None))
        .collect::<Result<Vec<_>, _>>()?;
    let mut trials: Vec<Vec<TrialSummary>> = vec![Vec::with_capacity(per_trial.len()); specs.len()];
    for summaries in per_trial {
        for (p, s) in summaries.into_iter().enumerate() {
            trials[p].push(s);
        }
    }
    Ok(Comparison {
        policies: specs.iter().map(|s| s.name().to_string()).collect(),
        trials,
    })
}

pub fn run_trials(cfg: &WorldConfig, spec: PolicySpec) -> Result<Vec<TrialSummary>, SimError> {
    Ok(compare_policies(cfg, &[spec])?.trials.remove(0))
}

/// Reversal ages at active slots along one stationary-start traffic path,
/// recorded the same way the world does.
pub fn sample_true_taus<R: Rng + ?Sized>(band: &BandConfig, n_slots: u64, rng: &mut R) -> Vec<u64> {
    let mut state = band.traffic.sample_stationary(rng);
    let mut last: [Option<u64>; 2] = [None, None];
    let mut out = Vec::new();
    for t in 0..n_slots {
        if t > 0 {
            if let Some(tx) = state.transmitter() {
                last[tx] = Some(t - 1);
            }
            state = band.traffic.step(state, rng);
        }
        if let Some(tx) = state.transmitter() {
            if let Some(at) = last[1 - tx] {
                out.push(t - at);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::expected_interference;
    use crate::matrix::gaussian_complex;
    use rand::SeedableRng;

    fn config(bands: Vec<BandConfig>, n_slots: u64, n_trials: u64) -> WorldConfig {
        WorldConfig {
            bands,
            m_s: 4,
            m_p: 1,
            limits: PowerLimits::from_db(20.0, -10.0, 1).unwrap(),
            t_frac: 0.8,
            sensing: SensingConfig::default(),
            sensing_mode: SensingMode::Ideal,
            n_slots,
            n_trials,
            master_seed: 42,
        }
    }

    fn four_bands(alpha: f64) -> Vec<BandConfig> {
        [0, 3, 4, 5]
            .iter()
            .map(|&c| BandConfig::builtin(alpha, c).unwrap())
            .collect()
    }

    fn records(
        cfg: &WorldConfig,
        specs: &[PolicySpec],
    ) -> (Vec<TrialSummary>, Vec<Vec<SlotRecord>>) {
        let mut out = vec![Vec::new(); specs.len()];
        let mut sink = |i: usize, r: &SlotRecord| out[i].push(r.clone());
        let s = run_trial(cfg, specs, 0, Some(&mut sink)).unwrap();
        (s, out)
    }

    #[test]
    fn validation() {
        let good = config(four_bands(0.99), 10, 1);
        assert!(good.validate().is_ok());
        let mut c = good.clone();
        c.m_s = 1;
        assert!(matches!(c.validate(), Err(SimError::Channel(_))));
        let mut c = good.clone();
        c.t_frac = 0.0;
        assert!(matches!(
            c.validate(),
            Err(SimError::InvalidConfig {
                field: "t_frac",
                ..
            })
        ));
        let mut c = good.clone();
        c.bands.clear();
        assert!(c.validate().is_err());
        let mut c = good.clone();
        c.n_trials = 0;
        assert!(c.validate().is_err());
        let mut c = good;
        c.limits.m_p = 2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn record_invariants() {
        let cfg = config(four_bands(0.9938), 3_000, 1);
        let specs: Vec<PolicySpec> = PolicyKind::ALL.iter().map(|&k| PolicySpec::of(k)).collect();
        let (summaries, recs) = records(&cfg, &specs);
        for (p, rs) in recs.iter().enumerate() {
            assert_eq!(rs.len(), 3_000);
            let mut acc_rate = 0.0;
            let mut int_sum = 0.0;
            let mut n_active = 0;
            let mut warm = 0;
            for r in rs {
                assert_eq!(r.rate, link_rate(cfg.t_frac, r.power, r.gamma));
                assert!(r.interference >= 0.0);
                if !r.pu_state.is_active() {
                    assert_eq!(r.interference, 0.0);
                    assert_eq!(r.power, cfg.limits.p0);
                }
                acc_rate += r.rate;
                match r.tau {
                    TauMark::WarmUp => {
                        warm += 1;
                        assert_eq!(r.power, 0.0);
                    }
                    _ if r.pu_state.is_active() => {
                        n_active += 1;
                        int_sum += r.interference;
                    }
                    _ => {}
                }
            }
            let s = &summaries[p];
            assert!((s.mean_rate - acc_rate / 3_000.0).abs() < 1e-12);
            assert_eq!(s.n_active_slots, n_active);
            assert_eq!(s.warmup_slots, warm);
            assert!(
                (s.mean_interference_active.unwrap() - int_sum / n_active as f64).abs() < 1e-12
            );
            assert_eq!(s.visits.iter().sum::<u64>(), 3_000);
        }
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let cfg = config(four_bands(0.9938), 500, 3);
        let specs = [
            PolicySpec::of(PolicyKind::Random),
            PolicySpec::of(PolicyKind::Dsee),
        ];
        let a = compare_policies(&cfg, &specs).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let b = pool.install(|| compare_policies(&cfg, &specs).unwrap());
        assert_eq!(a.trials, b.trials);
        // a policy's results do not depend on its neighbours
        let alone = run_trials(&cfg, specs[1]).unwrap();
        assert_eq!(alone, a.trials[1]);
    }

    #[test]
    fn silent_slots_use_the_full_channel() {
        let cfg = config(vec![BandConfig::builtin(0.9938, 0).unwrap()], 400, 1);
        let (_, recs) = records(&cfg, &[PolicySpec::of(PolicyKind::Fbfp)]);
        assert!(recs[0].iter().any(|r| r.pu_state == PuLinkState::Silent));
        for r in recs[0].iter().filter(|r| r.pu_state == PuLinkState::Silent) {
            assert_eq!(r.tau, TauMark::NotApplicable);
            assert!(r.gamma > 0.0);
        }
    }

    #[test]
    fn beamform_shapes_and_combiner() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = SensingConfig::default();
        let h = gaussian_complex(4, 4, &mut rng);
        let g1 = gaussian_complex(4, 1, &mut rng);
        let g2 = gaussian_complex(4, 1, &mut rng);
        let a = extract_null_space(&asymptotic_covariance(&g1, &cfg), 1, 0)
            .unwrap()
            .basis;
        let b = extract_null_space(&asymptotic_covariance(&g2, &cfg), 1, 0)
            .unwrap()
            .basis;
        let bf = beamform(&h, &a, &b).unwrap();
        assert_eq!(bf.h_eq.shape(), (3, 3));
        assert!((bf.v.norm_squared() - 1.0).abs() < 1e-12);
        // fresh precoder: no leakage
        assert!(leakage(100.0, &g1, &bf.v) < 1e-20);
        // orthonormal combiner keeps white noise white
        let bhb = &b.adjoint() * &b;
        assert!((&bhb - &ComplexMatrix::identity(3)).max_abs() < 1e-12);
    }

    #[test]
    fn perfect_correlation_means_no_leakage() {
        let cfg = config(vec![BandConfig::builtin(1.0, 3).unwrap()], 2_000, 1);
        let (s, recs) = records(&cfg, &[PolicySpec::of(PolicyKind::Fbdp)]);
        assert!(s[0].n_active_slots > 100);
        for r in recs[0].iter().filter(|r| matches!(r.tau, TauMark::Age(_))) {
            assert!(r.interference < 1e-18 * r.power.max(1.0));
            assert_eq!(r.power, cfg.limits.p0);
        }
    }

    #[test]
    fn fixed_band_tracks_true_tau() {
        let cfg = config(four_bands(0.9938), 5_000, 1);
        let specs = [
            PolicySpec::of(PolicyKind::Fbfp),
            PolicySpec::of(PolicyKind::RoundRobin),
        ];
        let (_, recs) = records(&cfg, &specs);
        let mut stale = 0;
        for r in &recs[0] {
            if let TauMark::Age(t) = r.tau {
                assert_eq!(Some(t), r.true_tau);
            }
        }
        for r in &recs[1] {
            if let TauMark::Age(t) = r.tau {
                let truth = r
                    .true_tau
                    .expect("a capture implies an earlier transmission");
                assert!(t >= truth);
                stale += (t > truth) as u32;
            }
        }
        assert!(stale > 100);
    }

    #[test]
    fn clairvoyant_sees_fresh_null_spaces() {
        let cfg = config(four_bands(0.9938), 2_000, 1);
        let (_, recs) = records(&cfg, &[PolicySpec::of(PolicyKind::Clairvoyant)]);
        for r in &recs[0] {
            if let TauMark::Age(t) = r.tau {
                assert_eq!(Some(t), r.true_tau);
            }
        }
    }

    #[test]
    fn fixed_band_interference_on_budget() {
        let alpha = 0.9938;
        let cfg = config(vec![BandConfig::builtin(alpha, 3).unwrap()], 40_000, 1);
        let (_, recs) = records(&cfg, &[PolicySpec::of(PolicyKind::Fbdp)]);
        // dynamic power makes every active slot's expected leakage equal I0
        let mut sum = 0.0;
        let mut n = 0;
        for r in &recs[0] {
            if let TauMark::Age(t) = r.tau {
                assert!(
                    (expected_interference(r.power, 1, alpha, t) - cfg.limits.i0).abs() < 1e-12
                );
                sum += r.interference;
                n += 1;
            }
        }
        let mean = sum / n as f64;
        assert!((mean / cfg.limits.i0 - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn single_band_policies_coincide() {
        let cfg = config(vec![BandConfig::builtin(0.9938, 4).unwrap()], 2_000, 2);
        let kinds = [
            PolicyKind::Fbfp,
            PolicyKind::Random,
            PolicyKind::RoundRobin,
            PolicyKind::Dsee,
        ];
        let specs: Vec<PolicySpec> = kinds.iter().map(|&k| PolicySpec::of(k)).collect();
        let c = compare_policies(&cfg, &specs).unwrap();
        for p in 1..specs.len() {
            for (a, b) in c.trials[0].iter().zip(&c.trials[p]) {
                assert_eq!(a.mean_rate, b.mean_rate);
                assert_eq!(a.mean_interference_active, b.mean_interference_active);
            }
        }
        let dynm = run_trials(&cfg, PolicySpec::of(PolicyKind::Fbdp)).unwrap();
        let clair = run_trials(&cfg, PolicySpec::of(PolicyKind::Clairvoyant)).unwrap();
        assert_eq!(
            dynm,
            clair
                .into_iter()
                .map(|s| TrialSummary {
                    policy: "fbdp".into(),
                    ..s
                })
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn finite_sensing_runs_and_flags_errors() {
        let mut cfg = config(vec![BandConfig::builtin(0.9755, 1).unwrap()], 4_000, 1);
        cfg.sensing_mode = SensingMode::FiniteN;
        cfg.sensing.n_samples = 20;
        cfg.sensing.p_m = 0.05;
        let (s, recs) = records(&cfg, &[PolicySpec::of(PolicyKind::Fbfp)]);
        let s = &s[0];
        assert!(s.n_active_slots > 1_000);
        // a small N and loose p_m make misclassification common enough to see
        assert!(s.misclassified_slots > 0);
        assert!(s.wrong_side_slots > 0);
        let wrong: Vec<f64> = recs[0]
            .iter()
            .filter(|r| r.wrong_side)
            .map(|r| r.interference)
            .collect();
        let right: Vec<f64> = recs[0]
            .iter()
            .filter(|r| !r.wrong_side && matches!(r.tau, TauMark::Age(_)) && r.pu_state.is_active())
            .map(|r| r.interference)
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&wrong) > 5.0 * mean(&right));
    }

    #[test]
    fn world_taus_follow_the_analytic_law() {
        let band = BandConfig::builtin(0.99, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let taus = sample_true_taus(&band, 400_000, &mut rng);
        let mean = taus.iter().sum::<u64>() as f64 / taus.len() as f64;
        let want = band.tau_distribution().unwrap().mean();
        assert!((mean / want - 1.0).abs() < 0.02, "{mean} vs {want}");
    }
}
