use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mmmo::commands;

/// Multi-objective search for model-merging configurations.
#[derive(Parser)]
#[command(name = "mmmo", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a toy task suite (base model, fine-tuned sources, manifest).
    GenSuite {
        /// Number of tasks and source models (2 to 4).
        #[arg(long)]
        tasks: usize,
        #[arg(long)]
        seed: u64,
        /// Output suite directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full optimizer against a suite.
    Optimize {
        /// Suite directory created by gen-suite.
        #[arg(long)]
        suite: PathBuf,
        /// Optional run-config TOML overriding the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        /// Output run directory (checkpoint, config copy, report).
        #[arg(long)]
        out: PathBuf,
        /// Disable the weak-to-strong adjustment (ablation).
        #[arg(long)]
        no_w2s: bool,
        /// Disable Fisher-information selection (ablation).
        #[arg(long)]
        no_fisher: bool,
        /// Drop the sparsity objective (ablation).
        #[arg(long)]
        no_sparsity: bool,
    },
    /// Continue an interrupted optimize run from its checkpoint.
    Resume {
        /// Run directory of the interrupted run.
        #[arg(long)]
        run: PathBuf,
    },
    /// Merge once with explicit weights and densities.
    Merge {
        #[arg(long)]
        suite: PathBuf,
        /// Comma-separated per-model weights, e.g. `0.6,0.4`.
        #[arg(long)]
        weights: String,
        /// Comma-separated per-model densities, e.g. `0.7,0.5`.
        #[arg(long)]
        densities: String,
        #[arg(long)]
        seed: u64,
        /// Output archive file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a baseline searcher (random, grid, or single-objective BO).
    Baseline {
        /// One of: random, grid, bo.
        #[arg(long)]
        method: String,
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Objective index for --method bo.
        #[arg(long)]
        target: Option<usize>,
        /// Comma-separated weight grid for --method grid.
        #[arg(long)]
        weight_grid: Option<String>,
        /// Comma-separated density grid for --method grid.
        #[arg(long)]
        density_grid: Option<String>,
        #[arg(long)]
        no_sparsity: bool,
    },
    /// Print a run's records, front, selection, and hypervolume trace.
    Report {
        #[arg(long)]
        run: PathBuf,
        /// csv or json.
        #[arg(long, default_value = "csv")]
        format: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSuite { tasks, seed, out } => commands::cmd_gen_suite(tasks, seed, &out),
        Command::Optimize { suite, config, seed, out, no_w2s, no_fisher, no_sparsity } => {
            commands::cmd_optimize(
                &suite,
                config.as_deref(),
                seed,
                &out,
                no_w2s,
                no_fisher,
                no_sparsity,
            )
        }
        Command::Resume { run } => commands::cmd_resume(&run),
        Command::Merge { suite, weights, densities, seed, out } => {
            commands::cmd_merge(&suite, &weights, &densities, seed, &out)
        }
        Command::Baseline {
            method,
            suite,
            config,
            seed,
            out,
            target,
            weight_grid,
            density_grid,
            no_sparsity,
        } => commands::cmd_baseline(
            &method,
            &suite,
            config.as_deref(),
            seed,
            &out,
            target,
            weight_grid.as_deref(),
            density_grid.as_deref(),
            no_sparsity,
        ),
        Command::Report { run, format } => commands::cmd_report(&run, &format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
