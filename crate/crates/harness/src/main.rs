use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use thermalab::{default_out_dir, run_to_dir, Command, Context, ExperimentConfig};

#[derive(Parser)]
#[command(name = "thermalab", version, about = "Energy-smoothing ensembles and local thermality by exact diagonalization")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Experiment config (JSON). Defaults to the open mixed-field Ising chain.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for CSV tables and report.json.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Spectrum cache directory.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Build and diagonalize; write the spectrum.
    Spectrum,
    /// Draw smoothing unitaries and check their invariants.
    Sample,
    /// Local distance of the smoothed equilibrium state from the Gibbs state.
    Equilibrium,
    /// Gibbs-state invariance, Berry-Esseen error and the sufficient condition.
    Thermality,
    /// Expected and sampled dynamics, relaxation and distance bounds.
    Dynamics,
    /// Haar moments, Weingarten values and purity.
    Moments,
    /// Equilibrium distances over a range of window widths.
    Sweep,
    /// Spectral-density and energy-tail diagnostics.
    CheckAssumptions,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Spectrum => Command::Spectrum,
            Cmd::Sample => Command::Sample,
            Cmd::Equilibrium => Command::Equilibrium,
            Cmd::Thermality => Command::Thermality,
            Cmd::Dynamics => Command::Dynamics,
            Cmd::Moments => Command::Moments,
            Cmd::Sweep => Command::Sweep,
            Cmd::CheckAssumptions => Command::CheckAssumptions,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = Command::from(cli.command);
    let cfg = match &cli.config {
        Some(p) => match ExperimentConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => ExperimentConfig::default_chain(vec![8]),
    };
    let cfg = match cli.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    };
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| default_out_dir(&cfg, command));
    let ctx = Context { cache: cli.cache.clone() };
    match run_to_dir(command, &cfg, &ctx, cli.threads, &out) {
        Ok(report) => {
            for m in &report.metrics {
                println!("{} = {}", m.name, m.value);
            }
            println!("wrote {} tables to {}", report.artifacts.len(), out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
