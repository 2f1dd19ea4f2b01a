use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nhqrc::experiment::{run_experiment, validate_config, ExperimentConfig, ExperimentKind};
use nhqrc::Error;

/// Non-Hermitian spin reservoir experiments.
///
/// Worker threads are taken from NHQRC_THREADS (default: all cores). Results
/// do not depend on the worker count.
#[derive(Parser)]
#[command(name = "nhqrc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Complex-eigenvalue count and max |Im E| over a gamma grid.
    SpectrumScan(RunArgs),
    /// Bisection for the onset of complex eigenvalues per realization.
    GammaCritical(RunArgs),
    /// Trace distance and purity of two evolving random states.
    Distance(RunArgs),
    /// Logarithmic negativity of an evolving product state.
    Negativity(RunArgs),
    /// Linear memory capacity of the reservoir.
    QrcLinear(RunArgs),
    /// NARMA prediction error and capacity.
    QrcNarma(RunArgs),
    /// One-step error of the unitary-ensemble emulation.
    EmulateCheck(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of realizations (overrides the config).
    #[arg(long, allow_negative_numbers = true)]
    ensemble: Option<i64>,
    /// Print the resolved config and exit.
    #[arg(long)]
    print_config: bool,
}

fn split(cmd: Command) -> (ExperimentKind, RunArgs) {
    match cmd {
        Command::SpectrumScan(a) => (ExperimentKind::SpectrumScan, a),
        Command::GammaCritical(a) => (ExperimentKind::GammaCritical, a),
        Command::Distance(a) => (ExperimentKind::Distance, a),
        Command::Negativity(a) => (ExperimentKind::Negativity, a),
        Command::QrcLinear(a) => (ExperimentKind::QrcLinear, a),
        Command::QrcNarma(a) => (ExperimentKind::QrcNarma, a),
        Command::EmulateCheck(a) => (ExperimentKind::EmulateCheck, a),
    }
}

fn load(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config { field: "--config".into(), message: format!("{}: {e}", path.display()) })?;
            validate_config(&text, Some(kind))?
        }
        None => ExperimentConfig::for_kind(kind),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.ensemble {
        cfg.ensemble = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = split(cli.command);
    let cfg = match load(kind, &args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if args.print_config {
        print!("{}", cfg.to_toml());
        return ExitCode::SUCCESS;
    }
    match run_experiment(&cfg, args.out.as_deref()) {
        Ok(manifest) => {
            for f in &manifest.files {
                println!("{}  {}", f.sha256, f.name);
            }
            eprintln!("done in {:.1} s", manifest.elapsed_seconds);
            ExitCode::SUCCESS
        }
        Err(e) if e.is_config_error() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
