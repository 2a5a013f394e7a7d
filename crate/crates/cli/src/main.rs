mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use decoy_core::Execution;

use config::{Engine, RunConfig, VariantChoice};
use error::{exit, CliError};

#[derive(Parser)]
#[command(
    name = "decoyqkd",
    version,
    about = "Decoy-state QKD simulation and fluctuation-robust bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; all sections optional.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Run on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a source/channel simulation and write observed and ground-truth statistics.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        engine: Option<Engine>,
        #[arg(long, value_name = "M")]
        pulses: Option<f64>,
        /// Output prefix: writes PREFIX.observed, PREFIX.tally (and PREFIX.records.csv).
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Also dump per-pulse records (Monte-Carlo only).
        #[arg(long)]
        records: bool,
    },
    /// Bound the single-photon contribution from an observed-statistics file.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        observed: PathBuf,
        /// Ground-truth tally; supplies the exact decoy single-photon QBER.
        #[arg(long, value_name = "PATH")]
        tally: Option<PathBuf>,
        #[arg(long, value_enum)]
        variant: Option<VariantChoice>,
        /// CSV output (stdout if omitted).
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Relative key rate over a grid of fluctuation bounds.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        engine: Option<Engine>,
        #[arg(long, value_name = "M")]
        pulses: Option<f64>,
        #[arg(long, value_enum)]
        variant: Option<VariantChoice>,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Verify the bound derivation on exact random micro-instances.
    OracleCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "N", default_value_t = 1000)]
        count: usize,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    Ok(cfg)
}

fn execution(common: &Common) -> Execution {
    if common.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            common,
            engine,
            pulses,
            out,
            records,
        } => {
            let mut cfg = load(&common)?;
            if let Some(e) = engine {
                cfg.run.engine = e;
            }
            if let Some(m) = pulses {
                cfg.run.pulses = m;
            }
            cfg.output.records |= records;
            let prefix = out
                .or_else(|| cfg.output.path.clone())
                .unwrap_or_else(|| PathBuf::from("decoyqkd"));
            let files = commands::simulate(&cfg, &prefix, execution(&common))?;
            eprintln!("wrote {} and {}", files.observed.display(), files.tally.display());
            if let Some(r) = files.records {
                eprintln!("wrote {}", r.display());
            }
        }
        Command::Estimate {
            common,
            observed,
            tally,
            variant,
            out,
        } => {
            let mut cfg = load(&common)?;
            if let Some(v) = variant {
                cfg.estimate.variant = v;
            }
            let obs = commands::load_observed(&observed)?;
            let reports = commands::estimate_reports(&cfg, &obs, tally.as_deref())?;
            let out = out.or_else(|| cfg.output.path.clone());
            commands::emit(out.as_deref(), &commands::report_csv(&reports)?)?;
        }
        Command::Sweep {
            common,
            engine,
            pulses,
            variant,
            out,
        } => {
            let mut cfg = load(&common)?;
            if let Some(e) = engine {
                cfg.run.engine = e;
            }
            if let Some(m) = pulses {
                cfg.run.pulses = m;
            }
            if let Some(v) = variant {
                cfg.estimate.variant = v;
            }
            let rows = commands::sweep_rows(&cfg, execution(&common))?;
            let out = out.or_else(|| cfg.output.path.clone());
            commands::emit(out.as_deref(), &commands::sweep_csv(&rows)?)?;
        }
        Command::OracleCheck { common, count, out } => {
            let cfg = load(&common)?;
            let (text, ok) = commands::oracle_check(count, cfg.run.seed, execution(&common));
            commands::emit(out.as_deref(), text.as_bytes())?;
            if out.is_some() {
                eprint!("{text}");
            }
            if !ok {
                return Err(CliError::Verification("oracle suite reported failures".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            debug_assert!(code != 0 && code <= exit::VERIFICATION);
            ExitCode::from(code)
        }
    }
}
