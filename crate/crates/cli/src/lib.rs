//! `stagerl` command-line front end.
//!
//! Exit codes: 0 success, 1 run failure, 2 usage or configuration error.

pub mod experiment;
mod commands;
mod serve;

use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::path::PathBuf;

pub use commands::{run_experiment, RunReport};
pub use serve::serve_stdio;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUN_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable overriding the default output root.
pub const OUTPUT_ROOT_ENV: &str = "STAGERL_OUTPUT_ROOT";

#[derive(Debug, Parser)]
#[command(name = "stagerl", version, about = "Stage-incentive reward shaping lab for robot-arm reaching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every run of an experiment file.
    Train(TrainArgs),
    /// Evaluate a saved checkpoint with exploration off.
    Eval(EvalArgs),
    /// Build a comparison table from run directories.
    Compare(CompareArgs),
    /// Export moving-average reward and step series for plotting.
    PlotData(PlotArgs),
    /// Serve the environment over line-delimited JSON.
    EnvServe(ServeArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Experiment file (TOML).
    pub config: PathBuf,
    /// Override a config value, e.g. `episodes=10` or `agent.gamma=0.95`.
    #[arg(long = "override", short = 'o', value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Directory receiving `<name>/<run>/` folders.
    #[arg(long, env = OUTPUT_ROOT_ENV, default_value = "runs")]
    pub output_root: PathBuf,
    /// Runs trained concurrently.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: u32,
    /// Print progress every this many episodes (0 = off).
    #[arg(long, default_value_t = 0)]
    pub progress: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint file written by `train`.
    pub checkpoint: PathBuf,
    /// Number of evaluation episodes.
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    /// Seed for evaluation targets; defaults to the checkpoint's run seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Where to write the JSON result; defaults to `eval.json` beside the checkpoint.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Run directories, or parents of run directories.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Directory receiving `table.csv` and `table.txt`.
    #[arg(long, env = OUTPUT_ROOT_ENV, default_value = "runs")]
    pub output_root: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Run directories containing `episodes.csv`.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Moving-average width in episodes.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub window: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TCP port on 127.0.0.1 (0 picks a free port).
    #[arg(long, conflicts_with = "stdio", required_unless_present = "stdio")]
    pub port: Option<u16>,
    /// Serve a single session on stdin/stdout.
    #[arg(long)]
    pub stdio: bool,
    /// Experiment file whose `[env]` section configures the arm.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Arm preset when no config is given.
    #[arg(long, default_value = "six_dof", value_parser = ["six_dof", "planar_2dof"])]
    pub preset: String,
}

/// Parses arguments and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::PlotData(a) => commands::plot_data(&a),
        Command::EnvServe(a) => serve::env_serve(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            e.code
        }
    }
}

/// An error together with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_USAGE,
            error: e.into(),
        }
    }

    pub fn run(e: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_RUN_FAILURE,
            error: e.into(),
        }
    }
}
