//! `tweetfeat` command line: runs pipeline stages from a TOML config.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

mod config;
mod pipeline;

use config::PipelineConfig;
use pipeline::{write_manifest, Pipeline, Stage};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or missing input. Exit code 1.
    #[error("{0}")]
    Validation(String),
    /// Failure while running a stage. Exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<tweetfeat::Error> for CliError {
    fn from(e: tweetfeat::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "tweetfeat", version, about = "Tweet corpus mining and return modelling")]
struct Cli {
    /// Pipeline configuration file.
    #[arg(long, short, global = true, default_value = "tweetfeat.toml")]
    config: PathBuf,
    /// Override a config value, e.g. `--set patterns.min_support=0.02`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Parse the corpus and write a normalized copy.
    Ingest,
    /// Build the user graph and score centrality.
    Graph,
    /// Walktrap communities, dendrogram and isolated subgraph.
    Communities,
    /// Force-directed layout of the user graph.
    Layout,
    /// Thematic keyword frequencies.
    Freq,
    /// Frequent itemsets.
    Itemsets,
    /// Association rules, rule graph and grouped matrix.
    Rules,
    /// Daily keyword series, raw and normalized.
    Series,
    /// Daily returns from the price file.
    Returns,
    /// Cross-validated LASSO on lagged keyword features.
    FitLasso,
    /// Bayesian regression by MCMC.
    FitBayes,
    /// Train and evaluate a Q-learning trader.
    Qlearn,
    /// Every stage in order.
    All,
}

impl Command {
    fn stages(self) -> Vec<Stage> {
        let one = match self {
            Command::All => return Stage::ALL.to_vec(),
            Command::Ingest => Stage::Ingest,
            Command::Graph => Stage::Graph,
            Command::Communities => Stage::Communities,
            Command::Layout => Stage::Layout,
            Command::Freq => Stage::Freq,
            Command::Itemsets => Stage::Itemsets,
            Command::Rules => Stage::Rules,
            Command::Series => Stage::Series,
            Command::Returns => Stage::Returns,
            Command::FitLasso => Stage::FitLasso,
            Command::FitBayes => Stage::FitBayes,
            Command::Qlearn => Stage::Qlearn,
        };
        vec![one]
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = PipelineConfig::load(&cli.config, &cli.overrides)?;
    let mut p = Pipeline::new(&cfg);
    for stage in cli.command.stages() {
        p.run(stage)?;
    }
    write_manifest(&cfg.output_dir, cfg.seed)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
