//! `behave` command-line front end: simulation runs, allocator comparison,
//! standalone detector evaluation and offline behavior-index computation.

mod commands;
mod history;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use behave::config::{AllocatorKind, RunConfig};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "behave", version, about = "Seeded edge-IoT resource management simulator")]
struct Cli {
    /// TOML configuration file; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Root directory for run outputs.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured allocator (edrl, greedy, random, oracle).
    #[arg(long, global = true)]
    allocator: Option<String>,
    /// Suppresses progress and summary output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Granularity {
    Sr,
    Tr,
    Both,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Runs the scenario for every sweep point and repeat.
    Simulate,
    /// Trains and evaluates the irregularity detectors on synthetic corpora.
    Detect {
        #[arg(long, value_enum, default_value = "both")]
        granularity: Granularity,
    },
    /// Runs every allocator on identical seeds and ranks them.
    Compare,
    /// Computes per-device behavior indices from a detection-history CSV.
    Brdi {
        history: PathBuf,
        /// Report devices `0..N` even when absent from the history.
        #[arg(long)]
        devices: Option<usize>,
    },
}

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Run(String),
}

impl CliError {
    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Run(m) => m,
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Run(_) => 1,
            CliError::Config(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Run(m) => write!(f, "run failed: {m}"),
        }
    }
}

/// Settings shared by every subcommand after overrides are applied.
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub quiet: bool,
}

impl Context {
    pub fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

fn resolve(cli: &Cli) -> Result<Context, CliError> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| CliError::Config(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(name) = &cli.allocator {
        config.allocator = AllocatorKind::parse(name)
            .ok_or_else(|| CliError::Config(format!("unknown allocator `{name}` (expected edrl, greedy, random or oracle)")))?;
    }
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(Context { config, out: cli.out.clone(), quiet: cli.quiet })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(&cli).and_then(|ctx| match &cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Detect { granularity } => commands::detect(&ctx, *granularity),
        Command::Compare => commands::compare(&ctx),
        Command::Brdi { history, devices } => commands::brdi(&ctx, history, *devices),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
