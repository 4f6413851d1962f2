use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use regime_tools::commands::{cmd_analyze, cmd_discretize, cmd_report, cmd_synth, cmd_train};
use regime_tools::config::{Overrides, PipelineConfig};
use regime_tools::exec::PoolExecutor;
use regime_tools::Result;

/// Self-supervised climate regime discretization and ENSO teleconnection analysis.
#[derive(Debug, Parser)]
#[command(name = "regimes", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the training and synthetic seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the number of training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted regimes and ENSO coupling.
    Synth(Common),
    /// Train the encoder and prototype bank.
    Train(Common),
    /// Label every day with its regime.
    Discretize {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to use (default: <out>/train/checkpoint.bin).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compute regime statistics and ENSO teleconnection tables.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Regime labels (default: <out>/discretize/regimes.csv).
        #[arg(long)]
        regimes: Option<PathBuf>,
        /// Re-derive every anomaly table by day-level counting and require equality.
        #[arg(long)]
        oracle: bool,
    },
    /// Summarize the dominant ENSO-sensitive regimes.
    Report {
        #[command(flatten)]
        common: Common,
        /// Analysis directory (default: <out>/analyze).
        #[arg(long)]
        analysis: Option<PathBuf>,
    },
}

fn load(c: &Common) -> Result<PipelineConfig> {
    PipelineConfig::load(
        &c.config,
        &Overrides {
            seed: c.seed,
            epochs: c.epochs,
            output_dir: c.out.clone(),
        },
    )
}

fn run(cli: Cli) -> Result<PathBuf> {
    Ok(match cli.command {
        Command::Synth(c) => cmd_synth(&load(&c)?)?.dir,
        Command::Train(c) => {
            let cfg = load(&c)?;
            cmd_train(&cfg, &PoolExecutor::from_env()?)?.dir
        }
        Command::Discretize { common, checkpoint } => {
            let cfg = load(&common)?;
            cmd_discretize(&cfg, checkpoint.as_deref(), &PoolExecutor::from_env()?)?.dir
        }
        Command::Analyze { common, regimes, oracle } => cmd_analyze(&load(&common)?, regimes.as_deref(), oracle)?.dir,
        Command::Report { common, analysis } => cmd_report(&load(&common)?, analysis.as_deref())?.dir,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
