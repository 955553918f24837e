//! Experiment files: TOML schema, resolution into core types, diagnostics.

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;

use serde::Deserialize;

use underlay_core::channel::{alpha_from_doppler, DopplerSpec};
use underlay_core::policy::{DseeParams, PolicyKind, PolicySpec};
use underlay_core::power::{db_to_linear, BandConfig, PowerLimits};
use underlay_core::sensing::SensingConfig;
use underlay_core::sim::{SensingMode, WorldConfig};
use underlay_core::traffic::TrafficModel;

/// One problem found in a spec, located by a dotted path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn diag(path: impl Into<String>, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    #[serde(rename = "experiment")]
    pub experiments: Vec<ExperimentFile>,
}

/// What an experiment reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Report {
    /// Simulated and analytic rates, interference, clairvoyant bound.
    #[default]
    Policies,
    /// Activity-weighted mean reversal time of each band's traffic.
    ReversalTime,
    /// Fixed transmit power of each band.
    FixedPower,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub name: String,
    #[serde(default)]
    pub report: Report,
    #[serde(default)]
    pub policies: Vec<PolicyEntry>,
    pub world: WorldFile,
    pub sweep: Option<SweepFile>,
    /// Run the Monte Carlo; analytic rows are produced either way.
    #[serde(default = "yes")]
    pub simulate: bool,
    /// Write this experiment's rows here instead of the main output.
    pub output: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PolicyEntry {
    Name(String),
    Detailed {
        kind: String,
        base_epoch_len: Option<u64>,
        growth: Option<f64>,
        exploration_constant: Option<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldFile {
    pub bands: Vec<BandFile>,
    #[serde(default = "default_m_s")]
    pub m_s: usize,
    #[serde(default = "default_m_p")]
    pub m_p: usize,
    pub p0: Option<f64>,
    pub p0_db: Option<f64>,
    pub i0: Option<f64>,
    pub i0_db: Option<f64>,
    #[serde(default = "default_t_frac")]
    pub t_frac: f64,
    #[serde(default)]
    pub sensing: SensingFile,
    #[serde(default)]
    pub sensing_mode: SensingMode,
    #[serde(default = "default_n_slots")]
    pub n_slots: u64,
    #[serde(default = "default_n_trials")]
    pub n_trials: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_m_s() -> usize {
    4
}
fn default_m_p() -> usize {
    1
}
fn default_t_frac() -> f64 {
    0.8
}
fn default_n_slots() -> u64 {
    10_000
}
fn default_n_trials() -> u64 {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandFile {
    pub alpha: Option<f64>,
    pub doppler: Option<DopplerSpec>,
    pub config: Option<u32>,
    pub matrix: Option<[[f64; 3]; 3]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingFile {
    pub n_samples: usize,
    pub sigma_w2: f64,
    pub p_m: f64,
    pub pu_tx_power: Option<f64>,
    pub pu_tx_power_db: Option<f64>,
}

impl Default for SensingFile {
    fn default() -> Self {
        let d = SensingConfig::default();
        Self {
            n_samples: d.n_samples,
            sigma_w2: d.sigma_w2,
            p_m: d.p_m,
            pu_tx_power: None,
            pu_tx_power_db: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub parameter: String,
    pub values: Vec<f64>,
}

/// Parameters a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Every band's correlation.
    Alpha,
    /// Every band's builtin traffic config.
    Config,
    MS,
    NSamples,
    P0Db,
    I0Db,
    TFrac,
}

impl SweepParam {
    pub const ALL: [SweepParam; 7] = [
        SweepParam::Alpha,
        SweepParam::Config,
        SweepParam::MS,
        SweepParam::NSamples,
        SweepParam::P0Db,
        SweepParam::I0Db,
        SweepParam::TFrac,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Config => "config",
            SweepParam::MS => "m_s",
            SweepParam::NSamples => "n_samples",
            SweepParam::P0Db => "p0_db",
            SweepParam::I0Db => "i0_db",
            SweepParam::TFrac => "t_frac",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|p| p.name() == s)
    }

    fn integral(self) -> bool {
        matches!(
            self,
            SweepParam::Config | SweepParam::MS | SweepParam::NSamples
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// A fully resolved experiment: one world per sweep point.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub report: Report,
    pub policies: Vec<PolicySpec>,
    pub sweep: Option<Sweep>,
    pub simulate: bool,
    pub output: Option<PathBuf>,
    /// (sweep value, world) pairs; a single unlabelled point without a sweep.
    pub points: Vec<(Option<f64>, WorldConfig)>,
}

/// Parse TOML text. Syntax and type errors carry line and column.
pub fn parse(text: &str) -> Result<SpecFile, Diagnostic> {
    toml::from_str(text).map_err(|e| diag("<file>", e.to_string().trim_end().to_string()))
}

fn resolve_policy(entry: &PolicyEntry, path: &str) -> Result<PolicySpec, Diagnostic> {
    let (kind, base, growth, c) = match entry {
        PolicyEntry::Name(n) => (n.as_str(), None, None, None),
        PolicyEntry::Detailed {
            kind,
            base_epoch_len,
            growth,
            exploration_constant,
        } => (
            kind.as_str(),
            *base_epoch_len,
            *growth,
            *exploration_constant,
        ),
    };
    let kind = PolicyKind::from_name(kind).map_err(|e| diag(path, e.to_string()))?;
    let has_params = base.is_some() || growth.is_some() || c.is_some();
    let dsee = if kind == PolicyKind::Dsee {
        let d = DseeParams::default();
        Some(DseeParams {
            base_epoch_len: base.unwrap_or(d.base_epoch_len),
            growth: growth.unwrap_or(d.growth),
            exploration_constant: c.unwrap_or(d.exploration_constant),
        })
    } else if has_params {
        return Err(diag(
            path,
            format!("policy `{}` takes no parameters", kind.name()),
        ));
    } else {
        None
    };
    PolicySpec::new(kind, dsee).map_err(|e| diag(path, e.to_string()))
}

fn pick_db(
    linear: Option<f64>,
    db: Option<f64>,
    default_db: f64,
    path: &str,
    key: &str,
) -> Result<f64, Diagnostic> {
    match (linear, db) {
        (Some(_), Some(_)) => Err(diag(
            format!("{path}.{key}"),
            format!("give either `{key}` or `{key}_db`, not both"),
        )),
        (Some(x), None) => Ok(x),
        (None, Some(d)) => Ok(db_to_linear(d)),
        (None, None) => Ok(db_to_linear(default_db)),
    }
}

fn resolve_band(b: &BandFile, path: &str) -> Result<BandConfig, Diagnostic> {
    let alpha = match (b.alpha, b.doppler) {
        (Some(a), None) => a,
        (None, Some(d)) => {
            alpha_from_doppler(d).map_err(|e| diag(format!("{path}.doppler"), e.to_string()))?
        }
        (None, None) => return Err(diag(path, "needs `alpha` or `doppler`")),
        (Some(_), Some(_)) => return Err(diag(path, "give either `alpha` or `doppler`, not both")),
    };
    let traffic = match (b.config, b.matrix) {
        (Some(c), None) => {
            TrafficModel::builtin(c).map_err(|e| diag(format!("{path}.config"), e.to_string()))?
        }
        (None, Some(m)) => {
            TrafficModel::new(m).map_err(|e| diag(format!("{path}.matrix"), e.to_string()))?
        }
        (None, None) => return Err(diag(path, "needs `config` or `matrix`")),
        (Some(_), Some(_)) => return Err(diag(path, "give either `config` or `matrix`, not both")),
    };
    BandConfig::new(alpha, traffic).map_err(|e| diag(format!("{path}.alpha"), e.to_string()))
}

/// Base world plus the sweep value applied.
fn build_world(
    w: &WorldFile,
    path: &str,
    sweep: Option<(SweepParam, f64)>,
    diags: &mut Vec<Diagnostic>,
) -> Option<WorldConfig> {
    let mut m_s = w.m_s;
    let mut t_frac = w.t_frac;
    let mut n_samples = w.sensing.n_samples;
    let mut p0 = w.p0;
    let mut p0_db = w.p0_db;
    let mut i0 = w.i0;
    let mut i0_db = w.i0_db;
    let mut alpha_override = None;
    let mut config_override = None;
    if let Some((param, v)) = sweep {
        match param {
            SweepParam::Alpha => alpha_override = Some(v),
            SweepParam::Config => config_override = Some(v as u32),
            SweepParam::MS => m_s = v as usize,
            SweepParam::NSamples => n_samples = v as usize,
            SweepParam::TFrac => t_frac = v,
            SweepParam::P0Db => {
                p0 = None;
                p0_db = Some(v);
            }
            SweepParam::I0Db => {
                i0 = None;
                i0_db = Some(v);
            }
        }
    }

    let mut bands = Vec::new();
    if w.bands.is_empty() {
        diags.push(diag(
            format!("{path}.bands"),
            "at least one band is required",
        ));
    }
    for (f, b) in w.bands.iter().enumerate() {
        let mut b = b.clone();
        if let Some(a) = alpha_override {
            b.alpha = Some(a);
            b.doppler = None;
        }
        if let Some(c) = config_override {
            b.config = Some(c);
            b.matrix = None;
        }
        match resolve_band(&b, &format!("{path}.bands[{f}]")) {
            Ok(band) => bands.push(band),
            Err(d) => diags.push(d),
        }
    }

    let p0 = pick_db(p0, p0_db, 20.0, path, "p0");
    let i0 = pick_db(i0, i0_db, -10.0, path, "i0");
    let limits = match (p0, i0) {
        (Ok(p0), Ok(i0)) => match PowerLimits::new(p0, i0, w.m_p) {
            Ok(l) => Some(l),
            Err(e) => {
                diags.push(diag(path, e.to_string()));
                None
            }
        },
        (p0, i0) => {
            diags.extend(p0.err());
            diags.extend(i0.err());
            None
        }
    };
    let pu_tx_power = match (w.sensing.pu_tx_power, w.sensing.pu_tx_power_db) {
        (None, None) => SensingConfig::default().pu_tx_power,
        (lin, db) => match pick_db(lin, db, 0.0, &format!("{path}.sensing"), "pu_tx_power") {
            Ok(p) => p,
            Err(d) => {
                diags.push(d);
                return None;
            }
        },
    };
    let sensing = SensingConfig {
        n_samples,
        sigma_w2: w.sensing.sigma_w2,
        p_m: w.sensing.p_m,
        pu_tx_power,
    };

    if bands.len() != w.bands.len() {
        return None;
    }
    let cfg = WorldConfig {
        bands,
        m_s,
        m_p: w.m_p,
        limits: limits?,
        t_frac,
        sensing,
        sensing_mode: w.sensing_mode,
        n_slots: w.n_slots,
        n_trials: w.n_trials,
        master_seed: w.seed,
    };
    match cfg.validate() {
        Ok(()) => Some(cfg),
        Err(e) => {
            diags.push(diag(path, e.to_string()));
            None
        }
    }
}

fn resolve_sweep(s: &SweepFile, path: &str) -> Result<Sweep, Diagnostic> {
    let param = SweepParam::from_name(&s.parameter).ok_or_else(|| {
        let known: Vec<&str> = SweepParam::ALL.iter().map(|p| p.name()).collect();
        diag(
            format!("{path}.parameter"),
            format!(
                "unknown sweep parameter `{}` (known: {})",
                s.parameter,
                known.join(", ")
            ),
        )
    })?;
    if s.values.is_empty() {
        return Err(diag(
            format!("{path}.values"),
            "sweep needs at least one value",
        ));
    }
    for (i, &v) in s.values.iter().enumerate() {
        if !v.is_finite() || (param.integral() && (v < 0.0 || v.fract() != 0.0)) {
            return Err(diag(
                format!("{path}.values[{i}]"),
                format!("{v} is not a valid {}", param.name()),
            ));
        }
    }
    Ok(Sweep {
        param,
        values: s.values.clone(),
    })
}

/// Resolve every experiment, collecting all problems rather than stopping
/// at the first.
pub fn resolve(spec: &SpecFile) -> Result<Vec<Experiment>, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut out = Vec::new();
    let mut names = HashSet::new();
    if spec.experiments.is_empty() {
        diags.push(diag("experiment", "no experiments defined"));
    }
    for (i, e) in spec.experiments.iter().enumerate() {
        let path = format!("experiment[{i}]");
        if e.name.trim().is_empty() {
            diags.push(diag(format!("{path}.name"), "must not be empty"));
        } else if !names.insert(e.name.clone()) {
            diags.push(diag(
                format!("{path}.name"),
                format!("duplicate experiment name `{}`", e.name),
            ));
        }
        let mut policies = Vec::new();
        for (j, p) in e.policies.iter().enumerate() {
            match resolve_policy(p, &format!("{path}.policies[{j}]")) {
                Ok(s) => {
                    if policies.iter().any(|q: &PolicySpec| q.name() == s.name()) {
                        diags.push(diag(
                            format!("{path}.policies[{j}]"),
                            format!("policy `{}` listed twice", s.name()),
                        ));
                    }
                    policies.push(s);
                }
                Err(d) => diags.push(d),
            }
        }
        if e.report == Report::Policies && e.policies.is_empty() {
            diags.push(diag(
                format!("{path}.policies"),
                "at least one policy is required",
            ));
        }
        let sweep = match &e.sweep {
            Some(s) => match resolve_sweep(s, &format!("{path}.sweep")) {
                Ok(s) => Some(s),
                Err(d) => {
                    diags.push(d);
                    continue;
                }
            },
            None => None,
        };
        let wpath = format!("{path}.world");
        let mut points = Vec::new();
        match &sweep {
            Some(s) => {
                for &v in &s.values {
                    let before = diags.len();
                    if let Some(w) = build_world(
                        &e.world,
                        &format!("{wpath}[{}={v}]", s.param.name()),
                        Some((s.param, v)),
                        &mut diags,
                    ) {
                        points.push((Some(v), w));
                    }
                    // one bad sweep point usually means they all are
                    if diags.len() > before + 3 {
                        break;
                    }
                }
            }
            None => {
                if let Some(w) = build_world(&e.world, &wpath, None, &mut diags) {
                    points.push((None, w));
                }
            }
        }
        out.push(Experiment {
            name: e.name.clone(),
            report: e.report,
            policies,
            sweep,
            simulate: e.simulate,
            output: e.output.clone(),
            points,
        });
    }
    if diags.is_empty() {
        Ok(out)
    } else {
        Err(diags)
    }
}

/// Diagnostics for a spec text; empty when it is valid.
pub fn validate_text(text: &str) -> Vec<Diagnostic> {
    match parse(text) {
        Ok(spec) => resolve(&spec).err().unwrap_or_default(),
        Err(d) => vec![d],
    }
}
