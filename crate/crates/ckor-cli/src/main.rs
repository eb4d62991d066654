//! `ckor` command-line harness.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical error,
//! 4 partial result (some sweep cells diverged or some MPC runs failed).

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

#[derive(Parser)]
#[command(
    name = "ckor",
    version,
    about = "Kernel-based control Koopman operator toolkit: data generation, fitting, grid search, prediction, and MPC simulation"
)]
struct Cli {
    /// Experiment configuration file (TOML, strict schema).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override every seed in the configuration (derived seeds are offsets).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory (overrides the config's output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate training (and, with [evaluation], test) CSV datasets.
    Generate,
    /// Fit the configured estimator; writes model.json and fit_report.json.
    Fit,
    /// Grid search over mu/gamma/estimator; writes sweep.csv and sweep_timings.csv.
    Sweep,
    /// Roll a saved model out over a CSV dataset and report RMSE.
    Predict {
        /// Saved model file (from `ckor fit`).
        #[arg(long)]
        model: PathBuf,
        /// Dataset CSV to evaluate on.
        #[arg(long)]
        data: PathBuf,
        /// Rollout length per trajectory; 1 = one-step evaluation.
        #[arg(long)]
        horizon: usize,
    },
    /// Run the configured closed-loop MPC scenario; writes per-run logs.
    Mpc,
    /// Print the dimensions and kernels of a saved model.
    InspectModel {
        /// Saved model file.
        #[arg(long)]
        model: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("this subcommand requires --config PATH".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    if let Some(workers) = cli.workers {
        if workers == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot configure {workers} workers: {e}")))?;
    }
    match &cli.command {
        Command::Generate => {
            let cfg = load_config(cli)?;
            let out = commands::resolve_out(Some(&cfg), cli.out.as_ref());
            commands::cmd_generate(&cfg, &out)
        }
        Command::Fit => {
            let cfg = load_config(cli)?;
            let out = commands::resolve_out(Some(&cfg), cli.out.as_ref());
            commands::cmd_fit(&cfg, &out)
        }
        Command::Sweep => {
            let cfg = load_config(cli)?;
            let out = commands::resolve_out(Some(&cfg), cli.out.as_ref());
            commands::cmd_sweep(&cfg, &out)
        }
        Command::Predict { model, data, horizon } => {
            let out = commands::resolve_out(None, cli.out.as_ref());
            commands::cmd_predict(model, data, *horizon, &out)
        }
        Command::Mpc => {
            let cfg = load_config(cli)?;
            let out = commands::resolve_out(Some(&cfg), cli.out.as_ref());
            commands::cmd_mpc(&cfg, &out)
        }
        Command::InspectModel { model } => commands::cmd_inspect_model(model),
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(false) => 0,
        Ok(true) => {
            eprintln!("partial result: some cells or runs did not complete");
            4
        }
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            2
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("numerical error: {msg}");
            3
        }
    };
    std::process::exit(code);
}
