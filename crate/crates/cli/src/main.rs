use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use relfp::cli::{self, ScenarioKind};

/// Relativistic Fokker-Planck scenario runner.
#[derive(Parser)]
#[command(name = "relfp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time-dependent linear run with diagnostics and snapshots
    RunLinear(Common),
    /// Builds the discrete equilibrium and checks it is step-invariant
    SteadyLinear(Common),
    /// Radial plasma steady state (electrostatic mean field)
    SteadyVmfp(Common),
    /// Radial scalar-gravity steady state with mass continuation
    SteadyVnfp(Common),
    /// Lorentz and Galilean invariance of the operator residuals
    CheckInvariance(Common),
    /// Finite propagation speed with and without collisions
    CheckLightcone(Common),
    /// Momentum quadratures against Bessel closed forms
    CheckOracles(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file; every key has a default when omitted
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Overrides `scenario.seed`
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Caps the number of worker threads
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

impl Command {
    fn split(self) -> (ScenarioKind, Common) {
        match self {
            Self::RunLinear(c) => (ScenarioKind::RunLinear, c),
            Self::SteadyLinear(c) => (ScenarioKind::SteadyLinear, c),
            Self::SteadyVmfp(c) => (ScenarioKind::SteadyVmfp, c),
            Self::SteadyVnfp(c) => (ScenarioKind::SteadyVnfp, c),
            Self::CheckInvariance(c) => (ScenarioKind::CheckInvariance, c),
            Self::CheckLightcone(c) => (ScenarioKind::CheckLightcone, c),
            Self::CheckOracles(c) => (ScenarioKind::CheckOracles, c),
        }
    }
}

fn fail(out: &std::path::Path, kind: ScenarioKind, err: &relfp::Error) -> ExitCode {
    eprintln!("error: {err}");
    if let Err(e) = cli::write_failure(out, Some(kind), err) {
        eprintln!("error: could not write failure record: {e}");
    }
    ExitCode::from(cli::exit_code_for(err) as u8)
}

fn main() -> ExitCode {
    let (kind, args) = Cli::parse().command.split();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(cli::EXIT_CONFIG as u8);
        }
    }
    let parsed = match &args.config {
        Some(path) => cli::load_config(path, Some(kind)),
        None => cli::parse_config("", Some(kind)),
    };
    let mut scenario = match parsed {
        Ok(s) => s,
        Err(e) => return fail(&args.out, kind, &e),
    };
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    match cli::run(&scenario, &args.out) {
        Ok(outcome) => {
            for c in &outcome.checks {
                let verdict = if c.passed() { "PASS" } else { "FAIL" };
                println!("{verdict} {} = {:.6e} ({} {:.3e})", c.name, c.value, c.relation, c.threshold);
            }
            println!("{} files written to {}", outcome.files.len(), args.out.display());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => fail(&args.out, kind, &e),
    }
}
