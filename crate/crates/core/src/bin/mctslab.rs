//! Command-line front end: `run`, `sweep` and `verify`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mctslab::harness::{run_experiment, verify, write_outputs, ExperimentConfig, Suite, VerifyOptions};
use mctslab::Error;

#[derive(Parser)]
#[command(name = "mctslab", version, about = "MCTS backup and exploration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment (no `sweep.*` keys).
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the cartesian product of the `sweep.*` axes.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a verification suite and print its JSON report.
    Verify {
        /// kernels, regularizers, concentration or oracle-equivalence
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Regularizer temperature; negative values inject a fault.
        #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
        tau: f64,
        /// Monte-Carlo trials per concentration cell.
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
        /// Write the report here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Seed base; overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    workers: Option<usize>,
    /// CSV path; overrides `output.path`.
    #[arg(long)]
    out: Option<PathBuf>,
}

const EXIT_ASSERTION: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. } | Error::Usage(_) | Error::Domain(_) | Error::SizeGuard { .. } => EXIT_CONFIG,
        _ => EXIT_ASSERTION,
    }
}

fn experiment(path: &Path, common: &Common, sweep: bool) -> Result<(), Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(0, "config", format!("cannot read {}: {e}", path.display())))?;
    let mut config = ExperimentConfig::parse(&text)?;
    if let Some(seed) = common.seed {
        config.set_seed(seed);
    }
    match (sweep, config.swept) {
        (false, true) => return Err(Error::Usage("config has sweep.* keys; use `mctslab sweep`".into())),
        (true, false) => return Err(Error::Usage("config has no sweep.* keys; use `mctslab run`".into())),
        _ => {}
    }
    let workers = common
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(Error::Usage("--workers must be at least 1".into()));
    }
    let out = common
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", config.name)));
    let outcome = run_experiment(&config, workers)?;
    let paths = write_outputs(&config, if sweep { "sweep" } else { "run" }, &outcome, &out)?;
    eprintln!("wrote {} rows to {}", outcome.records.len(), paths.csv.display());
    for row in &outcome.aggregates {
        if matches!(row.metric, "return" | "success" | "eps_omega" | "regret") {
            eprintln!(
                "{:<40} {:>8} {:<9} {:>12.4} +- {:.4}",
                row.variant, row.budget, row.metric, row.mean, row.two_std
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, common } => experiment(config, common, false),
        Command::Sweep { config, common } => experiment(config, common, true),
        Command::Verify { suite, seed, tau, trials, out } => (|| {
            let suite: Suite = suite.parse()?;
            let opts = VerifyOptions {
                seed: *seed,
                tau: *tau,
                concentration_trials: *trials,
                ..VerifyOptions::default()
            };
            let report = verify(suite, &opts);
            let json = serde_json::to_string_pretty(&report)?;
            println!("{json}");
            if let Some(path) = out {
                std::fs::write(path, format!("{json}\n"))
                    .map_err(|source| Error::Output { path: path.clone(), source })?;
            }
            if report.passed {
                Ok(())
            } else {
                Err(Error::Precondition(format!("suite {suite} failed")))
            }
        })(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
