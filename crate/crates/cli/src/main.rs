//! `gexp run <config.json>`: runs an experiment suite and writes one CSV per
//! experiment plus `summary.csv`.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails or a run
//! errors, 2 on configuration errors.

mod config;
mod error;
mod experiments;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use config::SuiteConfig;
use error::CliError;
use experiments::{Check, Status};

#[derive(Debug, Parser)]
#[command(
    name = "gexp",
    version,
    about = "Batch experiments for sublinear G-expectations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiments listed in a JSON configuration.
    Run {
        config: PathBuf,
        /// Output directory.
        #[arg(long, env = "GEXP_OUT_DIR", default_value = "gexp-out")]
        out: PathBuf,
        /// Overrides `mc.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    experiment: &'a str,
    check: &'a str,
    value: f64,
    tolerance: Option<f64>,
    seed: Option<u64>,
    status: Status,
}

fn write_summary(path: &Path, rows: &[(String, Check)]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record([
        "experiment",
        "check",
        "value",
        "tolerance",
        "seed",
        "status",
    ])?;
    for (experiment, c) in rows {
        w.serialize(SummaryRow {
            experiment,
            check: &c.check,
            value: c.value,
            tolerance: c.tolerance,
            seed: c.seed,
            status: c.status,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn run_suite(config_path: &Path, out: &Path, seed: Option<u64>) -> Result<bool, CliError> {
    let text = std::fs::read_to_string(config_path).map_err(|e| CliError::Config {
        location: config_path.display().to_string(),
        message: e.to_string(),
    })?;
    let suite = SuiteConfig::parse(&text)?;
    let setup = suite.setup(seed)?;
    std::fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    let mut outcome = Ok(());
    for (i, experiment) in suite.experiments.iter().enumerate() {
        let name = experiment.name();
        let table = out.join(format!("{:02}-{name}.csv", i + 1));
        match experiments::run(experiment, &setup, &table) {
            Ok(checks) => {
                for c in checks {
                    let tol = c
                        .tolerance
                        .map_or(String::new(), |t| format!(" (tolerance {t:.3e})"));
                    println!(
                        "{:<4} {name}: {} = {:.6e}{tol}",
                        label(c.status),
                        c.check,
                        c.value
                    );
                    rows.push((name.to_string(), c));
                }
            }
            Err(e) => {
                outcome = Err(CliError::from_run(format!("experiments[{i}] ({name})"), e));
                break;
            }
        }
    }
    write_summary(&out.join("summary.csv"), &rows)?;
    outcome?;
    Ok(rows.iter().all(|(_, c)| c.status != Status::Fail))
}

fn label(status: Status) -> &'static str {
    match status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Info => "INFO",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, seed } => match run_suite(&config, &out, seed) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(1),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code())
            }
        },
    }
}
