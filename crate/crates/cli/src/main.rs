//! `optomech`: derive, steady, propagate, optimize, baseline and analyze.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "optomech", version, about = "Open-system pulse optimization for a hybrid atom-cavity-oscillator system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Named parameter set (set1, set2); ignored when --config is given.
    #[arg(long, default_value = "set1")]
    pub preset: String,
    /// Problem JSON (parameters, target, slots, budgets).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fock levels kept for cavity and oscillator.
    #[arg(long)]
    pub dims: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Exit with status 4 when a value misses its reference band.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Transformed-frame parameters, regime diagnostics and RWA ratios.
    Derive {
        #[command(flatten)]
        common: Common,
    },
    /// Steady state of the preparation stage, cross-checked by long-time relaxation.
    Steady {
        #[command(flatten)]
        common: Common,
    },
    /// Propagates the steady state under a control sequence.
    Propagate {
        #[command(flatten)]
        common: Common,
        /// Sequence CSV written by `optimize` or `baseline`.
        #[arg(long)]
        sequence: PathBuf,
    },
    /// Multi-restart pulse optimization.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Target keyword (fock1, noon11) when no --config is given.
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        restarts: Option<usize>,
        /// Wall-clock limit in seconds for the dissipative stage of each restart.
        #[arg(long)]
        budget: Option<f64>,
        /// Starts every restart from the π-pulse sequence with this relative jitter.
        #[arg(long)]
        warm_start: Option<f64>,
        /// Re-evaluates the best sequence at this truncation.
        #[arg(long)]
        verify_dim: Option<usize>,
        /// Worker threads for restarts (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Tuned three-segment π-pulse transfer.
    Baseline {
        #[command(flatten)]
        common: Common,
    },
    /// Fidelity, Wigner negativity and log-negativity of a final state.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// State bundle JSON written by `propagate`; its last state is analyzed.
        #[arg(long, conflicts_with = "sequence")]
        states: Option<PathBuf>,
        /// Sequence CSV; the steady state is propagated under it first.
        #[arg(long)]
        sequence: Option<PathBuf>,
        #[arg(long)]
        target: Option<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Derive { common } => commands::derive(&common),
        Command::Steady { common } => commands::steady(&common),
        Command::Propagate { common, sequence } => commands::propagate(&common, &sequence),
        Command::Optimize {
            common,
            target,
            seed,
            restarts,
            budget,
            warm_start,
            verify_dim,
            workers,
        } => commands::optimize(
            &common,
            &commands::OptimizeArgs {
                target,
                seed,
                restarts,
                budget,
                warm_start,
                verify_dim,
                workers,
            },
        ),
        Command::Baseline { common } => commands::baseline(&common),
        Command::Analyze {
            common,
            states,
            sequence,
            target,
        } => commands::analyze(&common, states.as_deref(), sequence.as_deref(), target),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
