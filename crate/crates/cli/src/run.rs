//! Turn resolved experiments into CSV rows.

use std::io::Write;

use serde::Serialize;

use underlay_core::analytics::{
    clairvoyant_gain_bound, expected_rate_dbfp_uniform, expected_rate_fbdp, expected_rate_fbfp,
    AnalyticsError,
};
use underlay_core::policy::{select_fixed_band, PolicyKind};
use underlay_core::sim::{
    compare_policies, run_trial, Comparison, Estimate, SimError, SlotRecord, TauMark, WorldConfig,
};

use crate::config::{Experiment, Report};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub experiment: String,
    pub sweep_param: String,
    pub sweep_value: String,
    pub policy: String,
    pub metric: &'static str,
    pub value: f64,
    pub stderr: Option<f64>,
    pub n_slots: Option<u64>,
    pub n_trials: Option<u64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_slots: Option<u64>,
    pub n_trials: Option<u64>,
}

impl Overrides {
    fn apply(&self, w: &WorldConfig) -> WorldConfig {
        let mut w = w.clone();
        w.master_seed = self.seed.unwrap_or(w.master_seed);
        w.n_slots = self.n_slots.unwrap_or(w.n_slots);
        w.n_trials = self.n_trials.unwrap_or(w.n_trials);
        w
    }
}

#[derive(Debug, Clone, Serialize)]
struct SlotRow<'a> {
    experiment: &'a str,
    sweep_value: &'a str,
    policy: &'a str,
    trial: u64,
    slot: u64,
    band: usize,
    pu_state: &'static str,
    believed_state: &'static str,
    tau: String,
    true_tau: Option<u64>,
    power: f64,
    gamma: f64,
    rate: f64,
    interference: f64,
    wrong_side: bool,
    misclassified: bool,
}

fn state_name(s: underlay_core::traffic::PuLinkState) -> &'static str {
    use underlay_core::traffic::PuLinkState::*;
    match s {
        Silent => "silent",
        Pu1Tx => "pu1_tx",
        Pu2Tx => "pu2_tx",
    }
}

fn numerical(context: String) -> impl FnOnce(AnalyticsError) -> CliError {
    move |e| match e {
        AnalyticsError::NumericalFailure(q) => CliError::Numerical {
            context,
            message: q.to_string(),
        },
        other => CliError::Config(format!("{context}: {other}")),
    }
}

fn sim_error(context: String) -> impl FnOnce(SimError) -> CliError {
    move |e| match e {
        SimError::Matrix(m) => CliError::Numerical {
            context,
            message: m.to_string(),
        },
        other => CliError::Config(format!("{context}: {other}")),
    }
}

fn simulate(
    exp: &Experiment,
    label: &str,
    w: &WorldConfig,
    slots: &mut Option<&mut csv::Writer<Box<dyn Write>>>,
) -> Result<Comparison, CliError> {
    let ctx = || format!("{} at {label}", exp.name);
    let Some(out) = slots.as_mut() else {
        return compare_policies(w, &exp.policies).map_err(sim_error(ctx()));
    };
    // sequential so records stream out in order; results match the parallel path
    let names: Vec<&str> = exp.policies.iter().map(|p| p.name()).collect();
    let mut trials = vec![Vec::new(); names.len()];
    let mut write_err = None;
    for t in 0..w.n_trials {
        let mut sink = |p: usize, r: &SlotRecord| {
            if write_err.is_some() {
                return;
            }
            let row = SlotRow {
                experiment: &exp.name,
                sweep_value: label,
                policy: names[p],
                trial: t,
                slot: r.slot,
                band: r.band,
                pu_state: state_name(r.pu_state),
                believed_state: state_name(r.believed_state),
                tau: match r.tau {
                    TauMark::NotApplicable => "na".into(),
                    TauMark::WarmUp => "warmup".into(),
                    TauMark::Age(a) => a.to_string(),
                },
                true_tau: r.true_tau,
                power: r.power,
                gamma: r.gamma,
                rate: r.rate,
                interference: r.interference,
                wrong_side: r.wrong_side,
                misclassified: r.misclassified,
            };
            if let Err(e) = out.serialize(row) {
                write_err = Some(e);
            }
        };
        let s = run_trial(w, &exp.policies, t, Some(&mut sink)).map_err(sim_error(ctx()))?;
        if let Some(e) = write_err.take() {
            return Err(e.into());
        }
        for (p, s) in s.into_iter().enumerate() {
            trials[p].push(s);
        }
    }
    Ok(Comparison {
        policies: names.iter().map(|s| s.to_string()).collect(),
        trials,
    })
}

/// Rows of one experiment. Slot records, if requested, go to `slots`.
pub fn run_experiment(
    exp: &Experiment,
    ov: &Overrides,
    mut slots: Option<&mut csv::Writer<Box<dyn Write>>>,
) -> Result<Vec<Row>, CliError> {
    let mut rows = Vec::new();
    let sweep_param = exp
        .sweep
        .as_ref()
        .map_or(String::new(), |s| s.param.name().to_string());
    for (value, world) in &exp.points {
        let w = ov.apply(world);
        w.validate().map_err(sim_error(exp.name.clone()))?;
        let label = value.map_or(String::new(), |v| v.to_string());
        let ctx = format!(
            "{} at {}",
            exp.name,
            if label.is_empty() {
                "base point"
            } else {
                &label
            }
        );
        let row = |policy: &str, metric: &'static str, est: Estimate, simulated: bool| Row {
            experiment: exp.name.clone(),
            sweep_param: sweep_param.clone(),
            sweep_value: label.clone(),
            policy: policy.to_string(),
            metric,
            value: est.mean,
            stderr: simulated.then_some(est.stderr),
            n_slots: simulated.then_some(w.n_slots),
            n_trials: simulated.then_some(w.n_trials),
            seed: w.master_seed,
        };
        let exact = |x: f64| Estimate {
            mean: x,
            stderr: 0.0,
            n: 1,
        };
        let band_label = |f: usize| {
            if w.bands.len() == 1 {
                "none".to_string()
            } else {
                format!("band_{f}")
            }
        };

        match exp.report {
            Report::ReversalTime => {
                for (f, b) in w.bands.iter().enumerate() {
                    let d = b
                        .tau_distribution()
                        .map_err(|e| CliError::Config(format!("{ctx}: {e}")))?;
                    rows.push(row(
                        &band_label(f),
                        "mean_tau",
                        exact(d.activity_weighted_mean()),
                        false,
                    ));
                }
            }
            Report::FixedPower => {
                for (f, b) in w.bands.iter().enumerate() {
                    let p = b
                        .fixed_power(&w.limits)
                        .map_err(|e| CliError::Config(format!("{ctx}: {e}")))?;
                    rows.push(row(&band_label(f), "fixed_power", exact(p), false));
                }
            }
            Report::Policies => {
                let cmp = if exp.simulate {
                    Some(simulate(exp, &label, &w, &mut slots)?)
                } else {
                    None
                };
                let star = select_fixed_band(&w.bands, &w.limits)
                    .map_err(|e| CliError::Config(format!("{ctx}: {e}")))?;
                for (p, spec) in exp.policies.iter().enumerate() {
                    let name = spec.name();
                    if let Some(c) = &cmp {
                        rows.push(row(name, "rate_mc", c.rate(p), true));
                        rows.push(row(name, "interference_mc", c.interference(p), true));
                        let taus: Vec<f64> = c.trials[p]
                            .iter()
                            .filter_map(|s| s.mean_tau_active)
                            .collect();
                        rows.push(row(name, "tau_mc", Estimate::from_samples(&taus), true));
                    }
                    let analytic = match spec.kind() {
                        PolicyKind::Fbfp => Some(expected_rate_fbfp(
                            &w.bands[star],
                            &w.limits,
                            w.t_frac,
                            w.m_s,
                        )),
                        PolicyKind::Fbdp => Some(expected_rate_fbdp(
                            &w.bands[star],
                            &w.limits,
                            w.t_frac,
                            w.m_s,
                        )),
                        PolicyKind::Random | PolicyKind::RoundRobin => Some(
                            expected_rate_dbfp_uniform(&w.bands, &w.limits, w.t_frac, w.m_s),
                        ),
                        PolicyKind::Dsee | PolicyKind::Clairvoyant => None,
                    };
                    if let Some(r) = analytic {
                        let r = r.map_err(numerical(ctx.clone()))?;
                        rows.push(row(name, "rate_analytic", exact(r.expected_rate), false));
                    }
                    if spec.kind() == PolicyKind::Clairvoyant {
                        let b = clairvoyant_gain_bound(&w.bands, &w.limits, w.t_frac, w.m_s, w.m_p)
                            .map_err(numerical(ctx.clone()))?;
                        rows.push(row(name, "bound", exact(b), false));
                    }
                }
            }
        }
    }
    Ok(rows)
}
