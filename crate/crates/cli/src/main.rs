use clap::{Parser, Subcommand};
use geobayes_cli::commands::{self, Command, RunOptions};
use geobayes_cli::config::LoadedConfig;
use geobayes_cli::error::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "geobayes", version, about = "Bayesian estimation of maps of manifold-valued parameters under small Gaussian noise")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root; results go to <out>/<command>/.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Treat tube violations as errors (exit 4).
    #[arg(long, global = true)]
    strict: bool,
    /// Overwrite results of a different config or seed.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Tabulate energy, second fundamental forms and kappa on the grid.
    Describe,
    /// Solve for the least favourable prior.
    PriorSolve,
    /// Monte Carlo risk curves and the fitted expansion coefficients.
    Risk,
    /// Estimates at the points of a CSV file.
    Estimate,
    /// Closed-form checks on the circle and sphere.
    Selftest,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let command = match cli.command {
        Sub::Selftest => {
            let checks = commands::selftest()?;
            let failed = checks.iter().filter(|c| !c.pass).count();
            for c in &checks {
                println!("{} {} {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            return if failed == 0 { Ok(()) } else { Err(CliError::Io(format!("{failed} selftest checks failed"))) };
        }
        Sub::Describe => Command::Describe,
        Sub::PriorSolve => Command::PriorSolve,
        Sub::Risk => Command::Risk,
        Sub::Estimate => Command::Estimate,
    };
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = LoadedConfig::load(path)?;
    let opts = RunOptions { out: cli.out.clone(), seed: cli.seed, strict: cli.strict, force: cli.force };
    let record = commands::run(command, &cfg, &opts)?;
    for w in &record.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
