//! `oflsim` — experiment driver for the locally private online federated
//! learning simulator.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

#[derive(Parser)]
#[command(
    name = "oflsim",
    about = "Online federated learning under local DP with correlated noise",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a factorization, write its file, and print norm stats as JSON.
    Factorize {
        /// binary-tree | toeplitz | identity
        #[arg(long)]
        mechanism: String,
        /// Total local steps (R·tau).
        #[arg(long)]
        steps: usize,
        /// Round length; adds per-round prefix norms to the stats.
        #[arg(long)]
        tau: Option<usize>,
        /// Output file (default <mechanism>_<steps>.csv).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Convert an (epsilon, delta) budget into a noise variance.
    Calibrate {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        /// Gradient-norm clip bound B_g.
        #[arg(long)]
        clip: f64,
        /// binary-tree | toeplitz | identity (with --steps).
        #[arg(long)]
        mechanism: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
        /// Calibrate against a factorization file instead.
        #[arg(long)]
        factor_file: Option<PathBuf>,
    },
    /// Run one simulation from a JSON config; writes trace.csv + summary.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
        /// Also dump the generated sample table as CSV.
        #[arg(long)]
        dump_samples: bool,
    },
    /// Run seeds × mechanisms with shared data streams; writes
    /// comparison.csv + summary.json.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Dump the per-seed sample tables (identical across mechanisms).
        #[arg(long)]
        dump_samples: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Factorize {
            mechanism,
            steps,
            tau,
            output,
        } => commands::cmd_factorize(mechanism, *steps, *tau, output.clone()),
        Command::Calibrate {
            epsilon,
            delta,
            clip,
            mechanism,
            steps,
            factor_file,
        } => commands::cmd_calibrate(
            *epsilon,
            *delta,
            *clip,
            mechanism.as_deref(),
            *steps,
            factor_file.as_deref(),
        ),
        Command::Simulate {
            config,
            output_dir,
            dump_samples,
        } => commands::cmd_simulate(config, output_dir, *dump_samples),
        Command::Compare {
            config,
            output_dir,
            dump_samples,
        } => commands::cmd_compare(config, output_dir.as_deref(), *dump_samples),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
