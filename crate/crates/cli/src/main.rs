mod commands;
mod config;
mod error;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use balancemix::trainer::Mode;
use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::{Artifact, LabelSource};
use crate::config::Overrides;
use crate::error::CliError;

const THREADS_ENV: &str = "BALANCEMIX_THREADS";

#[derive(Debug, Parser)]
#[command(name = "balancemix", version, about = "Noisy, imbalanced multi-label training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Balancemix,
    #[value(name = "bce_baseline")]
    BceBaseline,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Balancemix => Mode::Balancemix,
            ModeArg::BceBaseline => Mode::BceBaseline,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a training split, a clean validation split and a manifest.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; the config's output_dir when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model and write the run directory.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Training dataset file.
        #[arg(long)]
        dataset: PathBuf,
        /// Validation dataset file; `val.bmd` next to the training file when omitted.
        #[arg(long)]
        valset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Print the metrics of a checkpoint on a dataset file as JSON.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "true")]
        labels: LabelSource,
    },
    /// Dump per-epoch sampler, mixture or ledger state of a run as CSV.
    Inspect {
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum)]
        what: Artifact,
        /// Output directory; `<run>/inspect` when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .map(Some)
            .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { config, out, seed } => {
            let overrides = Overrides {
                seed,
                ..Overrides::default()
            };
            let cfg = commands::load_config(config.as_deref(), &overrides)?;
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            commands::generate(&cfg, &out)?;
            eprintln!("wrote {}", out.display());
        }
        Command::Train {
            config,
            dataset,
            valset,
            out,
            seed,
            mode,
        } => {
            let overrides = Overrides {
                seed,
                mode: mode.map(Mode::from),
                threads: threads_from_env()?,
            };
            let cfg = commands::load_config(config.as_deref(), &overrides)?;
            let valset = valset.unwrap_or_else(|| commands::default_valset(&dataset));
            let out = out.unwrap_or_else(|| cfg.output_dir.clone());
            let metrics = commands::train_run(&cfg, &dataset, &valset, &out)?;
            eprintln!(
                "wrote {}; final mAP {}",
                out.display(),
                metrics.map_all.map_or_else(|| "undefined".into(), |m| format!("{m:.4}"))
            );
        }
        Command::Evaluate {
            checkpoint,
            dataset,
            labels,
        } => {
            let metrics = commands::evaluate_checkpoint(&checkpoint, &dataset, labels)?;
            let json = serde_json::to_string_pretty(&metrics).map_err(balancemix::Error::from)?;
            // a closed pipe (e.g. `| head`) is not an error
            if let Err(e) = writeln!(std::io::stdout().lock(), "{json}") {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(CliError::io(Path::new("<stdout>"), e));
                }
            }
        }
        Command::Inspect { run, what, out } => {
            let out = out.unwrap_or_else(|| run.join("inspect"));
            for path in commands::inspect(&run, what, &out)? {
                eprintln!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
