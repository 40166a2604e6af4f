//! Command-line companion to `hetfed-core`: dataset file loaders, the TOML
//! experiment config, artifact readers/writers, and the five pipeline
//! commands (profile, cluster, partition, simulate, report).

pub mod commands;
pub mod config;
pub mod ingest;
pub mod io;

/// A command failure, split by which exit code it maps to: 2 for config
/// errors, 1 for everything that goes wrong while running the pipeline.
#[derive(Debug)]
pub enum CliError {
    Config(anyhow::Error),
    Pipeline(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Pipeline(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(e) => write!(f, "config error: {e:#}"),
            Self::Pipeline(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl std::error::Error for CliError {}
