//! `jaca`: simulate, cross-validate, fit, predict and evaluate JACA models.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::failure::Failure;

#[derive(Parser)]
#[command(name = "jaca", version, about = "Joint association and classification analysis of multi-view data")]
struct Cli {
    /// Worker threads for cross-validation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate multi-view data and its ground truth from a simulation config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: current directory).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Cross-validate (rho, epsilon) and write the CV report.
    Cv {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a model, cross-validating first unless rho and epsilon are both fixed.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Predict classes for new subjects.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// One CSV per model view, in order.
        #[arg(long, value_delimiter = ',', required = true)]
        data: Vec<PathBuf>,
        /// 1-based views to predict from (default: all).
        #[arg(long, value_delimiter = ',')]
        views: Option<Vec<usize>>,
        /// Directory for predictions.csv (default: standard output).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Report cardinality, misclassification and, with a truth file, recovery metrics.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        /// View CSVs to classify with every stored view subset.
        #[arg(long, value_delimiter = ',')]
        data: Vec<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// A predictions CSV from `jaca predict`.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Ground-truth JSON from `jaca simulate`.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Directory for metrics.json (default: standard output).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Simulate { config, output, seed } => commands::simulate(config, output.as_deref(), *seed),
        Command::Cv { config, output, seed } => commands::cv(config, output.as_deref(), *seed),
        Command::Fit { config, output, seed } => commands::fit(config, output.as_deref(), *seed),
        Command::Predict {
            model,
            data,
            views,
            output,
        } => commands::predict(model, data, views.as_deref(), output.as_deref()),
        Command::Evaluate {
            model,
            data,
            labels,
            predictions,
            truth,
            output,
        } => commands::evaluate(&commands::EvaluateArgs {
            model,
            data,
            labels: labels.as_deref(),
            predictions: predictions.as_deref(),
            truth: truth.as_deref(),
            output: output.as_deref(),
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) | Err(Failure::Closed) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("jaca: {f}");
            f.exit_code()
        }
    }
}
