mod commands;
mod config;
mod options;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use options::{GridArgs, PredictArgs, RefitArgs, SelectArgs, SimulateArgs, TrainArgs};

/// Random forests with gain penalization for feature selection.
///
/// Every subcommand takes `--config FILE`, a TOML document whose keys are
/// that subcommand's long flag names. Flags on the command line override
/// the file. Exit status: 0 on success, 2 for invalid settings, 3 for data
/// or runtime errors.
#[derive(Parser, Debug)]
#[command(name = "regforest", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the 250-feature benchmark and write it with its ground truth
    Simulate(WithConfig<SimulateArgs>),
    /// Train a forest and write the model and a per-feature report
    Train(WithConfig<TrainArgs>),
    /// Predict a CSV with a saved model
    Predict(WithConfig<PredictArgs>),
    /// Write the features a forest selects (importance > 0)
    Select(WithConfig<SelectArgs>),
    /// Run a replicate x mtry x lambda0 x gamma x g sweep
    Grid(WithConfig<GridArgs>),
    /// Select with a regularized forest, then refit a standard forest on the selection
    Refit(WithConfig<RefitArgs>),
}

#[derive(clap::Args, Debug)]
struct WithConfig<T: clap::Args> {
    /// TOML file with default values for the flags of this command
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    args: T,
}

impl<T: clap::Args + Serialize + DeserializeOwned> WithConfig<T> {
    fn resolve(&self, name: &str) -> anyhow::Result<T> {
        let cmd = Cli::command();
        let sub = cmd.find_subcommand(name).expect("subcommand exists");
        let allowed: Vec<String> = sub
            .get_arguments()
            .filter_map(|a| a.get_long())
            .filter(|l| *l != "config")
            .map(str::to_string)
            .collect();
        config::resolve(&self.args, self.config.as_deref(), &allowed)
    }
}

/// A settings error, reported with exit status 2.
pub(crate) fn invalid(message: impl Into<String>) -> anyhow::Error {
    regforest::Error::Config(message.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<regforest::Error>() {
            return if e.is_validation() { 2 } else { 3 };
        }
    }
    3
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(a.resolve("simulate")?),
        Command::Train(a) => commands::train(a.resolve("train")?),
        Command::Predict(a) => commands::predict(a.resolve("predict")?),
        Command::Select(a) => commands::select(a.resolve("select")?),
        Command::Grid(a) => commands::grid(a.resolve("grid")?),
        Command::Refit(a) => commands::refit(a.resolve("refit")?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
