//! `ea-lab`: runs parameter sweeps of the ea-core numerics and writes CSV
//! datasets, plot scripts and a hashed manifest.

mod config;
mod error;
mod experiments;
mod output;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Experiment, ExperimentConfig};
use error::CliError;

/// Default output directory when neither `--output-dir` nor `output_dir` is set.
const OUTPUT_DIR_ENV: &str = "EA_LAB_OUTPUT_DIR";
const FALLBACK_OUTPUT_DIR: &str = "ea-lab-output";

#[derive(Parser)]
#[command(name = "ea-lab", version, about = "Entanglement-assisted communication experiments")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` and the EA_LAB_OUTPUT_DIR variable.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Check hashes and re-evaluate a 1% subsample of every curve.
    Verify {
        manifest: PathBuf,
        /// Re-run Monte Carlo points with a different seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the available experiments.
    ListExperiments,
}

fn output_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUTPUT_DIR))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config {
                field: "--threads".into(),
                msg: e.to_string(),
            })?;
    }
    match cli.command {
        Command::ListExperiments => {
            for e in Experiment::ALL {
                println!("{:<16} {}", e.name(), e.description());
            }
            Ok(())
        }
        Command::Run { config, output_dir: flag } => {
            let text = std::fs::read_to_string(&config).map_err(|e| CliError::io(&config, e))?;
            let cfg = ExperimentConfig::parse(&text)?;
            let dir = output_dir(flag, &cfg);
            let summary = runner::run(&cfg, &dir)?;
            for p in &summary.written {
                println!("wrote {}", p.display());
            }
            for (name, err) in &summary.failed {
                eprintln!("curve {name} failed: {err}");
            }
            println!("manifest {}", summary.manifest.display());
            if summary.failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::CurvesFailed(summary.failed.len()))
            }
        }
        Command::Verify { manifest, seed } => {
            let report = runner::verify(&manifest, seed)?;
            for line in report.lines() {
                println!("{line}");
            }
            match report.failures() {
                0 => Ok(()),
                n if report.has_numerical() => Err(CliError::Core(ea_core::Error::Numerical {
                    op: "verify",
                    msg: format!("{n} file(s) could not be re-evaluated"),
                })),
                n => Err(CliError::VerifyFailed(n)),
            }
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
