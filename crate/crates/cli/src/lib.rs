//! Experiment driver for the underlay simulator: config files in, CSV out.

pub mod builtins;
pub mod config;
pub mod run;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use config::Diagnostic;
use run::{run_experiment, Overrides, Row};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid spec:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Diagnostics(Vec<Diagnostic>),
    #[error("numerical failure in {context}: {message}")]
    Numerical { context: String, message: String },
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Diagnostics(_) => 2,
            CliError::Numerical { .. } => 3,
            CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }
}

/// Spec text from a file path, or from a builtin of that name.
pub fn load_source(source: &str) -> Result<String, CliError> {
    let path = Path::new(source);
    if path.exists() {
        return std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {source}: {e}")));
    }
    builtins::find(source)
        .map(|b| b.toml.to_string())
        .ok_or_else(|| {
            CliError::Config(format!(
                "`{source}` is neither a readable file nor a builtin experiment"
            ))
        })
}

pub fn validate(source: &str) -> Result<Vec<Diagnostic>, CliError> {
    Ok(config::validate_text(&load_source(source)?))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub slot_records: bool,
    pub overrides: Overrides,
}

type CsvOut = csv::Writer<Box<dyn Write>>;

fn csv_to(path: &Path) -> Result<CsvOut, CliError> {
    let file = File::create(path)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", path.display())))?;
    Ok(csv::Writer::from_writer(
        Box::new(BufWriter::new(file)) as Box<dyn Write>
    ))
}

/// Slot records land next to the main output: `<out>.slots.csv`.
pub fn slot_records_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".slots.csv");
    PathBuf::from(s)
}

pub fn run(source: &str, opts: &RunOptions) -> Result<(), CliError> {
    let spec = config::parse(&load_source(source)?).map_err(|d| CliError::Diagnostics(vec![d]))?;
    let experiments = config::resolve(&spec).map_err(CliError::Diagnostics)?;

    let mut slots = match (&opts.out, opts.slot_records) {
        (_, false) => None,
        (Some(out), true) => Some(csv_to(&slot_records_path(out))?),
        (None, true) => return Err(CliError::Config("--slot-records needs --out".into())),
    };
    let mut main: CsvOut = match &opts.out {
        Some(p) => csv_to(p)?,
        None => csv::Writer::from_writer(Box::new(io::stdout().lock()) as Box<dyn Write>),
    };
    let mut side: BTreeMap<PathBuf, CsvOut> = BTreeMap::new();
    let mut main_rows = 0usize;
    for exp in &experiments {
        log::info!("running {}", exp.name);
        let rows: Vec<Row> = run_experiment(exp, &opts.overrides, slots.as_mut())?;
        let sink = match &exp.output {
            Some(p) => {
                if !side.contains_key(p) {
                    side.insert(p.clone(), csv_to(p)?);
                }
                side.get_mut(p).expect("just inserted")
            }
            None => {
                main_rows += rows.len();
                &mut main
            }
        };
        for r in rows {
            sink.serialize(r)?;
        }
    }
    if main_rows == 0 && opts.out.is_some() {
        // keep the header so the file is a valid, if empty, table
        main.write_record([
            "experiment",
            "sweep_param",
            "sweep_value",
            "policy",
            "metric",
            "value",
            "stderr",
            "n_slots",
            "n_trials",
            "seed",
        ])?;
    }
    main.flush()?;
    for w in side.values_mut() {
        w.flush()?;
    }
    if let Some(s) = slots.as_mut() {
        s.flush()?;
    }
    Ok(())
}
