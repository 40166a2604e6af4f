use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hetfed::commands;
use hetfed::config::ExperimentConfig;
use hetfed::CliError;

/// Data-heterogeneity profiling and federated simulation pipeline.
#[derive(Parser)]
#[command(name = "hetfed", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct CommonArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Experiment seed; overrides the config's top-level `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write class-level (and multi-dataset) proximity matrices.
    Profile(CommonArgs),
    /// Cluster the profiled class proximity into super clusters.
    Cluster(CommonArgs),
    /// Build the configured partition and its heterogeneity measures.
    Partition(CommonArgs),
    /// Run the configured federated algorithms on the stored partition.
    Simulate(CommonArgs),
    /// Join measures and summaries into cross-method report tables.
    Report(CommonArgs),
}

fn run(command: &Command) -> Result<(), CliError> {
    let args = match command {
        Command::Profile(a)
        | Command::Cluster(a)
        | Command::Partition(a)
        | Command::Simulate(a)
        | Command::Report(a) => a,
    };
    let config = ExperimentConfig::load(&args.config).map_err(CliError::Config)?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(&config.output.dir));
    let seed = args.seed.unwrap_or(config.seed);
    match command {
        Command::Profile(_) => commands::cmd_profile(&config, &out, seed),
        Command::Cluster(_) => commands::cmd_cluster(&config, &out, seed),
        Command::Partition(_) => commands::cmd_partition(&config, &out, seed),
        Command::Simulate(_) => commands::cmd_simulate(&config, &out, seed),
        Command::Report(_) => commands::cmd_report(&config, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
