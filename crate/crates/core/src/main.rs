use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use twins_core::harness::{self, RunContext, SweepKind};
use twins_core::par::Execution;

/// Device-free tracking with paired tags.
#[derive(Debug, Parser)]
#[command(name = "twins", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Master seed; falls back to the scenario's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Run every loop on the calling thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Simulate the scenario and write the raw traces.
    Simulate(Common),
    /// Sweep one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// min_power_vs_d, power_vs_D, height, mount_height, placement or p_false.
        #[arg(long)]
        kind: String,
        /// Trials per point for the p_false sweep.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Build the offline fingerprint.
    Train(Common),
    /// Track one walk.
    Track {
        #[command(flatten)]
        common: Common,
        /// Fingerprint file; defaults to `<out>/fingerprint.csv`.
        #[arg(long)]
        fingerprint: Option<PathBuf>,
        /// Directory with `queries.csv` and `ground_truth.csv` from `simulate`.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run repeated trials and summarize the error.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
        /// Reuse a fingerprint instead of training with the base seed.
        #[arg(long)]
        fingerprint: Option<PathBuf>,
    },
}

fn context(c: &Common) -> twins_core::Result<RunContext> {
    let exec = if c.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    RunContext::new(&c.scenario, c.seed, &c.out, exec)
}

fn run(verb: Verb) -> twins_core::Result<()> {
    match verb {
        Verb::Simulate(c) => harness::cmd_simulate(&context(&c)?),
        Verb::Sweep {
            common,
            kind,
            trials,
        } => {
            let kind: SweepKind = kind.parse()?;
            harness::cmd_sweep(&context(&common)?, kind, trials)
        }
        Verb::Train(c) => harness::cmd_train(&context(&c)?),
        Verb::Track {
            common,
            fingerprint,
            trace,
        } => harness::cmd_track(&context(&common)?, fingerprint.as_deref(), trace.as_deref())
            .map(drop),
        Verb::Evaluate {
            common,
            trials,
            fingerprint,
        } => harness::cmd_evaluate(&context(&common)?, trials, fingerprint.as_deref()).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TWINS_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.verb) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("twins: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
