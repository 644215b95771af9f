//! `chainsel`: reproducible experiments for online increasing-subsequence
//! selection.
//!
//! Exit status: 0 on success, 2 on configuration errors (bad flags,
//! out-of-range parameters), 1 on runtime faults.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl From<chainsel::Error> for CliError {
    fn from(e: chainsel::Error) -> Self {
        use chainsel::Error::*;
        match e {
            Domain(_) | Range { .. } | Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(format!("serialization error: {e}"))
    }
}

#[derive(Parser)]
#[command(name = "chainsel", version, about = "Online selection of an increasing subsequence: solvers and simulators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Base seed of the random streams
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for replicate-parallel work (default: all cores)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output file, written atomically
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the optimality equation; writes z,u,u_prime,theta_star
    Solve(commands::SolveArgs),
    /// Monte Carlo of the planar selection length; writes replicate,length
    Simulate(commands::SimulateArgs),
    /// Monte Carlo of the fixed-n rule; writes replicate,length
    Fixedn(commands::FixedNArgs),
    /// Simulate one jump-process path; writes jump_point,gap_size
    Pdmp(commands::PdmpArgs),
    /// Mean and variance of the jump count from the moment equations; writes z,u_theta,var
    Moments(commands::MomentsArgs),
    /// Coverage probabilities of the drift intervals; writes z,p_hat,stderr
    Coverage(commands::CoverageArgs),
    /// Stochastic-dominance check of cycle lengths against the renewal step
    Renewal(commands::RenewalArgs),
    /// Kolmogorov-Smirnov distance of normalized counts to the standard normal
    Clt(commands::CltArgs),
    /// Planar selection count against the matched jump process
    Compare(commands::CompareArgs),
    /// Expansion fits of the value function
    Fit(commands::FitArgs),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Solve(a) => &a.common,
            Command::Simulate(a) => &a.common,
            Command::Fixedn(a) => &a.common,
            Command::Pdmp(a) => &a.common,
            Command::Moments(a) => &a.common,
            Command::Coverage(a) => &a.common,
            Command::Renewal(a) => &a.common,
            Command::Clt(a) => &a.common,
            Command::Compare(a) => &a.common,
            Command::Fit(a) => &a.common,
        }
    }

    fn run(self) -> Result<serde_json::Value, CliError> {
        match self {
            Command::Solve(a) => commands::solve(a),
            Command::Simulate(a) => commands::simulate(a),
            Command::Fixedn(a) => commands::fixed_n(a),
            Command::Pdmp(a) => commands::pdmp(a),
            Command::Moments(a) => commands::moments(a),
            Command::Coverage(a) => commands::coverage(a),
            Command::Renewal(a) => commands::renewal(a),
            Command::Clt(a) => commands::clt(a),
            Command::Compare(a) => commands::compare(a),
            Command::Fit(a) => commands::fit(a),
        }
    }
}

fn execute(cmd: Command) -> Result<serde_json::Value, CliError> {
    let threads = cmd.common().threads;
    match threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;
            pool.install(|| cmd.run())
        }
        None => cmd.run(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(summary) => match serde_json::to_string_pretty(&summary) {
            Ok(s) => {
                println!("{s}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
