use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use s2sim_cli::{run_spec, ExperimentSpec, Mode};

#[derive(Parser)]
#[command(name = "s2sim", version, about = "Sparse systolic-array simulator experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every grid point and write results.csv and per-run reports.
    Run {
        #[command(flatten)]
        common: Common,
        /// Output directory; overrides the spec's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Only run the oracle and invariant checks.
        #[arg(long)]
        verify_only: bool,
    },
    /// Oracle and invariant checks only.
    Verify {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("S2SIM_LOG", "error")).init();
    let cli = Cli::parse();
    let (common, out, mode) = match cli.command {
        Command::Run {
            common,
            out,
            verify_only,
        } => (common, out, if verify_only { Mode::Verify } else { Mode::Run }),
        Command::Verify { common } => (common, None, Mode::Verify),
    };
    let mut spec = match ExperimentSpec::load(&common.spec) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    let jobs = common
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    match run_spec(&spec, out.as_deref(), jobs, mode) {
        Ok(summary) => {
            for f in &summary.failures {
                eprintln!("FAIL {f}");
            }
            if let Some(p) = &summary.csv_path {
                println!("{} points -> {}", summary.points, p.display());
            } else {
                println!("{} points verified", summary.points);
            }
            if summary.ok() {
                ExitCode::SUCCESS
            } else {
                eprintln!("{} failure(s)", summary.failures.len());
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
