//! Scenario launcher: runs TOML configs, sweeps one parameter across a
//! value list, validates configs, and manages the eigenbasis cache.
//!
//! Exit codes: 0 success, 1 config or validation problem, 2 runtime
//! failure, 3 resonator truncation breach.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ringup::error::Error;
use ringup::experiment::{self, load_config};

#[derive(Parser)]
#[command(name = "ringup", version, about = "Driven readout-resonator simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and emit its CSV outputs plus a manifest.
    Run {
        config: PathBuf,
        /// Output directory for CSV files and the manifest.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Directory holding cached eigenbases.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Rerun a scenario once per value of one swept parameter and emit an
    /// aggregated CSV of model and simulation observables.
    Sweep {
        config: PathBuf,
        /// Swept field: eps, ramp_ns, f_r, f_q, eta, g, e0, f_d.
        #[arg(long)]
        axis: String,
        /// Comma-separated values in config units (GHz or ns).
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Output directory for the sweep CSV.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check a config and report every problem found.
    Validate { config: PathBuf },
    /// Manage the eigenbasis cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    /// Diagonalize the config's parameters and store the basis.
    Build {
        config: PathBuf,
        #[arg(long, default_value = ".ringup-cache")]
        cache_dir: PathBuf,
    },
    /// Delete every cached basis file.
    Clear {
        #[arg(long, default_value = ".ringup-cache")]
        cache_dir: PathBuf,
    },
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Validation(_) | Error::InvalidParam(_) | Error::Config(_) => 1,
        Error::TruncationBreach { .. } => 3,
        _ => 2,
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, out, cache_dir } => {
            let cfg = load_config(&config)?;
            let report = experiment::run(&cfg, &out, cache_dir.as_deref())?;
            println!(
                "{}: {} integrator step(s), {} ms",
                cfg.name, report.n_steps, report.wall_ms
            );
            for f in &report.files {
                println!("  {}", f.display());
            }
            println!("  {}", report.manifest.display());
            Ok(())
        }
        Command::Sweep { config, axis, values, out } => {
            let cfg = load_config(&config)?;
            let path = experiment::sweep(&cfg, &axis, &values, &out)?;
            println!("{}: swept {} over {} point(s)", cfg.name, axis, values.len());
            println!("  {}", path.display());
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            cfg.validate()?;
            let p = cfg.resolved_params()?;
            println!("{}: ok (drive at {:.9} GHz)", cfg.name, p.f_d);
            Ok(())
        }
        Command::Cache { action } => match action {
            CacheAction::Build { config, cache_dir } => {
                let cfg = load_config(&config)?;
                let params = cfg.resolved_params()?;
                let path = experiment::cache_build(&params, &cache_dir)?;
                println!("cached {}", path.display());
                Ok(())
            }
            CacheAction::Clear { cache_dir } => {
                let n = experiment::cache_clear(&cache_dir)?;
                println!("removed {n} cached basis file(s)");
                Ok(())
            }
        },
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
