use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sphere_heat::experiment::{execute, parse_config_as, verify_outputs, ExperimentKind};
use sphere_heat::Error;

#[derive(Parser)]
#[command(name = "sphere-heat", version, about = "Stochastic heat flow on the L² unit sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run whatever experiment the config's `kind` names.
    Run(RunArgs),
    Simulate(RunArgs),
    ConvergeDt(RunArgs),
    ConvergeM(RunArgs),
    IdentitySuite(RunArgs),
    Uniqueness(RunArgs),
    MonteCarlo(RunArgs),
    /// Check an output directory against its manifest.
    Verify { dir: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

fn run(args: &RunArgs, kind: Option<ExperimentKind>) -> Result<bool, Error> {
    let text =
        std::fs::read_to_string(&args.config).map_err(|source| Error::Io { path: args.config.clone(), source })?;
    let mut cfg = parse_config_as(&text, kind)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    }
    let problems = cfg.violations();
    if !problems.is_empty() {
        return Err(Error::InvalidConfig(problems));
    }
    let (summary, _) = execute(&cfg, args.out.as_deref())?;
    let dir = args.out.as_deref().unwrap_or(&cfg.output_dir);
    for c in &summary.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("{tag} {}: {:.6e} (threshold {:.6e})", c.name, c.value, c.threshold);
    }
    if let Some(step) = summary.divergence {
        println!("diverged at step {step}");
    }
    println!("wrote {} in {:.2}s", dir.display(), summary.wall_time_secs);
    Ok(summary.passed())
}

fn verify(dir: &Path) -> Result<bool, Error> {
    let problems = verify_outputs(dir)?;
    for p in &problems {
        println!("MISMATCH {p}");
    }
    if problems.is_empty() {
        println!("OK {}", dir.display());
    }
    Ok(problems.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(a) => run(a, None),
        Command::Simulate(a) => run(a, Some(ExperimentKind::Simulate)),
        Command::ConvergeDt(a) => run(a, Some(ExperimentKind::ConvergeDt)),
        Command::ConvergeM(a) => run(a, Some(ExperimentKind::ConvergeM)),
        Command::IdentitySuite(a) => run(a, Some(ExperimentKind::IdentitySuite)),
        Command::Uniqueness(a) => run(a, Some(ExperimentKind::Uniqueness)),
        Command::MonteCarlo(a) => run(a, Some(ExperimentKind::MonteCarlo)),
        Command::Verify { dir } => verify(dir),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Error::InvalidConfig(problems)) => {
            for p in problems {
                eprintln!("config error: {p}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
