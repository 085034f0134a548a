use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mg1est::cli::{self, Mode};

#[derive(Parser)]
#[command(
    name = "mg1est",
    version,
    about = "M/G/1 scheduling with job size estimates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file (flat key = value text).
    config: PathBuf,
    /// Override the base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override arrivals per replication.
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the replication count.
    #[arg(long)]
    reps: Option<usize>,
    /// Output path stem; writes <out>.csv and <out>.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulator over the experiment grid.
    Simulate(RunArgs),
    /// Evaluate the analytic formulas over the experiment grid.
    Analyze(RunArgs),
    /// Simulate and analyze, then evaluate every inequality check; the
    /// exit status is 0 only if all checks pass.
    Verify(RunArgs),
}

fn load_spec(
    args: &RunArgs,
    force_mode: Option<Mode>,
) -> Result<cli::ExperimentSpec, cli::CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| cli::CliError::Io {
        path: args.config.display().to_string(),
        message: e.to_string(),
    })?;
    let mut spec = cli::parse_config(&text)?;
    if let Some(mode) = force_mode {
        spec.mode = mode;
    }
    if let Some(seed) = args.seed {
        spec.base_seed = seed;
    }
    if let Some(jobs) = args.jobs {
        spec.warmup_jobs = spec.warmup_jobs.min(jobs.saturating_sub(1));
        spec.jobs_per_replication = jobs;
    }
    if let Some(reps) = args.reps {
        spec.replications = reps;
    }
    if let Some(out) = &args.out {
        spec.out = Some(out.clone());
    }
    Ok(spec)
}

fn execute(args: &RunArgs, mode: Option<Mode>, verdict_gates_exit: bool) -> ExitCode {
    let spec = match load_spec(args, mode) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::FAILURE;
        }
    };
    eprintln!(
        "scenario {}: {} grid points x {} policies = {} runs",
        spec.scenario,
        spec.points.len(),
        spec.policies.len(),
        spec.grid_size()
    );
    let report = match cli::run_scenario(&spec) {
        Ok(report) => report,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::FAILURE;
        }
    };
    match &spec.out {
        Some(out) => {
            if let Err(e) = cli::write_artifacts(&report, out) {
                eprintln!("{e}");
                return ExitCode::FAILURE;
            }
            eprintln!("wrote {}.csv and {}.json", out.display(), out.display());
        }
        None => {
            print!("{}", cli::render_csv(&report));
        }
    }
    for check in &report.checks {
        eprintln!(
            "check {:<26} {}  {}",
            check.name,
            if check.passed { "pass" } else { "FAIL" },
            check.detail
        );
    }
    if verdict_gates_exit && !report.all_passed {
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Simulate(args) => execute(&args, Some(Mode::Simulate), false),
        Command::Analyze(args) => execute(&args, Some(Mode::Analyze), false),
        Command::Verify(args) => execute(&args, None, true),
    }
}
