//! `agrishare`: run the data-sharing pipeline stage by stage.
//!
//! Exit codes: 0 success, 1 invalid flags or inputs, 2 failure while running.

mod commands;
mod config;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(m) => write!(f, "failed: {m}"),
        }
    }
}

/// Attach an exit class to library errors.
pub trait Stage<T> {
    fn invalid(self) -> Result<T, CliError>;
    fn failed(self) -> Result<T, CliError>;
}

impl<T, E: fmt::Display> Stage<T> for Result<T, E> {
    fn invalid(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Validation(e.to_string()))
    }

    fn failed(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Runtime(e.to_string()))
    }
}

#[derive(Parser)]
#[command(name = "agrishare", version, about = "Privacy-preserving agricultural data sharing pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML file with default values for any flag (flags win).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for parallel stages; results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic crop or farmers'-market dataset.
    Generate(commands::GenerateArgs),
    /// Split a dataset into global.csv and market_<k>.csv shards.
    Partition(commands::PartitionArgs),
    /// Fit the global PCA model on the researcher's dataset.
    TrainPca(commands::TrainPcaArgs),
    /// Project a participant's raw rows with the global model.
    Transform(commands::TransformArgs),
    /// Add Laplace noise to a projected matrix.
    Privatize(commands::PrivatizeArgs),
    /// Collect privatized shares into a sandbox store.
    Aggregate(commands::AggregateArgs),
    /// K-Means over the sandbox store.
    Cluster(commands::ClusterArgs),
    /// Nearest shared rows to a profile, within its cluster.
    Recommend(commands::RecommendArgs),
    /// Rank participants by similarity to an initiator.
    Similarity(commands::SimilarityArgs),
    /// Personalized federated training over selected collaborators.
    Fedtrain(commands::FedtrainArgs),
    /// Membership-inference power of the shared data.
    EvalPower(commands::EvalPowerArgs),
    /// Cluster-label accuracy on noisy rows.
    EvalUtility(commands::EvalUtilityArgs),
    /// Centralized vs privacy-protected classifier accuracy.
    Table4(commands::Table4Args),
    /// Power / utility / federated accuracy over a grid of ε and seeds.
    Sweep(commands::SweepArgs),
    /// Re-verify fingerprints and manifest input hashes.
    Check(commands::CheckArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Partition(a) => commands::partition(a),
        Command::TrainPca(a) => commands::train_pca(a),
        Command::Transform(a) => commands::transform(a),
        Command::Privatize(a) => commands::privatize(a),
        Command::Aggregate(a) => commands::aggregate(a),
        Command::Cluster(a) => commands::cluster(a),
        Command::Recommend(a) => commands::recommend(a),
        Command::Similarity(a) => commands::similarity(a),
        Command::Fedtrain(a) => commands::fedtrain(a),
        Command::EvalPower(a) => commands::eval_power(a),
        Command::EvalUtility(a) => commands::eval_utility(a),
        Command::Table4(a) => commands::table4(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Check(a) => commands::check(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("agrishare: {e}");
            match e {
                CliError::Validation(_) => ExitCode::from(1),
                CliError::Runtime(_) => ExitCode::from(2),
            }
        }
    }
}
