use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use underlay_cli::run::Overrides;
use underlay_cli::{builtins, CliError, RunOptions};

#[derive(Parser)]
#[command(
    name = "underlay",
    version,
    about = "Multi-band underlay MIMO cognitive radio simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiments in a spec file (or a builtin, by name) and write CSV.
    Run {
        spec: String,
        /// Override every experiment's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for parallel trials.
        #[arg(long)]
        threads: Option<usize>,
        /// Also write every slot to <out>.slots.csv.
        #[arg(long)]
        slot_records: bool,
        /// Override slots per trial.
        #[arg(long)]
        slots: Option<u64>,
        /// Override the number of trials.
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Check a spec without running it.
    Validate { spec: String },
    /// List builtin experiments; with --show, print their specs.
    ListBuiltins {
        #[arg(long)]
        show: bool,
    },
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run {
            spec,
            seed,
            out,
            threads,
            slot_records,
            slots,
            trials,
        } => {
            if let Some(n) = threads {
                if n == 0 {
                    return fail(CliError::Config("--threads must be at least 1".into()));
                }
                if let Err(e) = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                {
                    return fail(CliError::Config(format!("cannot set up {n} threads: {e}")));
                }
            }
            let opts = RunOptions {
                out,
                slot_records,
                overrides: Overrides {
                    seed,
                    n_slots: slots,
                    n_trials: trials,
                },
            };
            match underlay_cli::run(&spec, &opts) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
        Command::Validate { spec } => match underlay_cli::validate(&spec) {
            Ok(d) if d.is_empty() => {
                println!("ok");
                ExitCode::SUCCESS
            }
            Ok(d) => fail(CliError::Diagnostics(d)),
            Err(e) => fail(e),
        },
        Command::ListBuiltins { show } => {
            for b in builtins::BUILTINS {
                if show {
                    println!("# {}: {}\n{}", b.name, b.description, b.toml);
                } else {
                    println!("{:<8} {}", b.name, b.description);
                }
            }
            ExitCode::SUCCESS
        }
    }
}
