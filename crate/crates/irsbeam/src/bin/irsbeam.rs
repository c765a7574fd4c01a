//! Command-line driver for the beamforming experiment sweeps.

use clap::{Args, Parser, Subcommand};
use irsbeam::harness::{
    format_summary, run_experiment, spec_from_toml, summarize, write_csv, SweepKind,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "irsbeam",
    about = "Monte-Carlo beamforming sweeps for IRS-assisted downlinks under diode power constraints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding the config file
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path, overriding the config file
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the effective power budget P0 at a fixed IRS size
    SweepPower(RunArgs),
    /// Sweep the IRS size at a fixed budget
    SweepSize(RunArgs),
    /// Convergence statistics at a single grid point
    Convergence(RunArgs),
    /// A single grid point
    Single(RunArgs),
}

fn execute(kind: SweepKind, args: &RunArgs) -> Result<(), Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("cannot read {}: {e}", args.config.display()))?;
    let spec = spec_from_toml(&text, kind, args.seed, args.out.clone())?;

    let rows = if let Some(threads) = args.threads {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        pool.install(|| run_experiment(&spec))?
    } else {
        run_experiment(&spec)?
    };

    write_csv(&rows, &spec.output_path)?;
    println!(
        "{} rows -> {} (seed {})",
        rows.len(),
        spec.output_path.display(),
        spec.seed
    );
    print!("{}", format_summary(&summarize(&rows)));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::SweepPower(a) => (SweepKind::PowerBudget, a),
        Command::SweepSize(a) => (SweepKind::IrsSize, a),
        Command::Convergence(a) => (SweepKind::Convergence, a),
        Command::Single(a) => (SweepKind::Single, a),
    };
    match execute(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
