//! Command-line surface: subcommand definitions and dispatch.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod error;
pub mod manifest;
pub mod output;
pub mod tasks;

use error::CliResult;

#[derive(Parser)]
#[command(name = "toporoute", version)]
#[command(about = "Route task DAGs to agent topologies, run them and report on the runs")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Route one DAG and print the decision
    Route {
        /// DAG file: canonical JSON or a decomposer record array
        dag: PathBuf,
        /// Router thresholds (TOML)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Append the routing record to this JSONL log
        #[arg(long)]
        log: Option<PathBuf>,
        /// Task id written to the log record
        #[arg(long)]
        task_id: Option<String>,
        #[arg(long)]
        domain: Option<String>,
    },

    /// Run the full route, execute, synthesize pipeline from a manifest
    Exec {
        manifest: PathBuf,
        /// Output directory; overrides the manifest's
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Print the variance-ratio lower bound
    Ratio {
        #[arg(long)]
        omega: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.5)]
        c_tau: f64,
    },

    /// Monte-Carlo check of the variance ratio on one archetype
    Simulate {
        /// chain, wide-shallow, deep-narrow or diamond
        #[arg(long)]
        archetype: String,
        #[arg(long, default_value_t = 6)]
        size: usize,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        pool_size: usize,
        #[arg(long, default_value_t = 0.5)]
        c_tau: f64,
        /// Draw random subtask weights instead of uniform ones
        #[arg(long)]
        random_weights: bool,
        #[arg(long, default_value = "sim")]
        out: PathBuf,
    },

    /// Pick theta_gamma on a dev split of a task corpus and freeze it
    Calibrate {
        tasks: PathBuf,
        /// Candidate theta_gamma values
        #[arg(long, value_delimiter = ',', default_values_t = toporoute::router::DEFAULT_GAMMA_GRID)]
        grid: Vec<f64>,
        /// Share of tasks in the dev split
        #[arg(long, default_value_t = 0.15)]
        fraction: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Base thresholds; theta_gamma is replaced
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "calibration")]
        out: PathBuf,
    },

    /// Summarize JSONL run logs into distribution, confusion and histogram files
    Report {
        logs: PathBuf,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },

    /// Generate a synthetic task corpus with per-topology quality scores
    Corpus {
        #[arg(long, default_value_t = 500)]
        count: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Half-width of the uniform noise added to each topology score
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
        #[arg(long, default_value = "corpus")]
        out: PathBuf,
    },

    /// Route and run every task of a corpus on mock agents, writing a JSONL log
    Batch {
        tasks: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Pricing table; adds run records with costs
        #[arg(long)]
        pricing: Option<PathBuf>,
        #[arg(long, default_value_t = 0.8)]
        theta_cs: f64,
        #[arg(long, default_value = "logs")]
        out: PathBuf,
    },
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Route { dag, config, log, task_id, domain } => {
            commands::route::run(&dag, config.as_deref(), log.as_deref(), task_id, domain)
        }
        Command::Exec { manifest, out } => commands::exec::run(&manifest, out),
        Command::Ratio { omega, gamma, k, eps, c_tau } => commands::lab::ratio(omega, gamma, k, eps, c_tau),
        Command::Simulate { archetype, size, eps, trials, seed, pool_size, c_tau, random_weights, out } => {
            let args = commands::lab::SimulateArgs { archetype, size, eps, trials, seed, pool_size, c_tau, random_weights };
            commands::lab::simulate(&args, &out)
        }
        Command::Calibrate { tasks, grid, fraction, seed, config, out } => {
            commands::calibrate::run(&tasks, &grid, fraction, seed, config.as_deref(), &out)
        }
        Command::Report { logs, out } => commands::report::run(&logs, &out),
        Command::Corpus { count, seed, noise, out } => commands::corpus::generate(count, seed, noise, &out),
        Command::Batch { tasks, config, pricing, theta_cs, out } => {
            commands::corpus::batch(&tasks, config.as_deref(), pricing.as_deref(), theta_cs, &out)
        }
    }
}

/// Parses the process arguments, runs the command and maps errors to exit
/// codes.
pub fn main_entry() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.class as u8)
        }
    }
}
