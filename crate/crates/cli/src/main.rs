//! `fedsense` command-line front end.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "fedsense", version, about = "Federated spectrum sensing simulator")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Top-level seed; overrides the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replace existing outputs.
    #[arg(long, global = true)]
    overwrite: bool,
    /// Print the resolved plan and exit without running.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a measurement campaign and write raw IQ files.
    Campaign {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Extract features from IQ files or campaign directories.
    Extract(commands::ExtractArgs),
    /// Run the reference and/or federated study.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::Both)]
        mode: Mode,
    },
    /// Write or re-read model coefficient snapshots.
    Model {
        #[command(subcommand)]
        action: ModelAction,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Reference,
    Federated,
    Both,
}

#[derive(Debug, Subcommand)]
enum ModelAction {
    /// Write the default model, or one trained on a feature CSV.
    Dump(commands::DumpArgs),
    /// Parse a snapshot and write it back in canonical form.
    Restore {
        snapshot: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    /// Bad flags or configuration; exit code 2.
    Usage(String),
    /// Failure while running; exit code 1.
    Run(String),
}

impl From<fedsense::Error> for CliError {
    fn from(e: fedsense::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Run(e.to_string()))?;
    }
    let g = &cli.global;
    match cli.command {
        Command::Campaign { config } => commands::campaign(g, config.as_deref()),
        Command::Extract(args) => commands::extract(g, &args),
        Command::Experiment { config, mode } => commands::experiment(g, config.as_deref(), mode),
        Command::Model { action } => match action {
            ModelAction::Dump(args) => commands::model_dump(g, &args),
            ModelAction::Restore { snapshot } => commands::model_restore(g, &snapshot),
        },
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
