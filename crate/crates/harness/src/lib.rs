//! Configuration, persistence, reporting and the experiment pipelines behind
//! the `thermalab` command line tool.

pub mod cache;
pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

use std::path::{Path, PathBuf};

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use experiments::{Command, Context};
pub use report::RunReport;

/// Output directory used when neither the CLI nor the config names one.
pub fn default_out_dir(cfg: &ExperimentConfig, command: Command) -> PathBuf {
    PathBuf::from("runs").join(format!("{}-{}", command.name(), &cfg.hash()[..12]))
}

/// Run one command on a pool of `threads` workers and write its outputs.
pub fn run_to_dir(
    command: Command,
    cfg: &ExperimentConfig,
    ctx: &Context,
    threads: Option<usize>,
    out: &Path,
) -> Result<RunReport> {
    let rec = experiments::with_threads(threads, || experiments::run(command, cfg, ctx))??;
    let report = rec.write(out)?;
    report::check_artifacts(out, &report)?;
    Ok(report)
}
