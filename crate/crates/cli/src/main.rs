//! `mbs`: fit mesh-based penalized regressions from CSV files and run the
//! simulation studies.

mod data;
mod fit;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mbs::{Rho, StudyConfig};

use data::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "mbs", version, about = "Mesh-based penalized regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one λ, or a λ path, to a CSV dataset.
    Fit(Box<fit::FitArgs>),
    /// Run an RMSE simulation study described by a JSON config.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Study configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Directory for study.csv and study.json.
    #[arg(long, default_value = ".")]
    output: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    /// `auto` or a positive number.
    #[arg(long, value_parser = fit::parse_rho)]
    rho: Option<Rho>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Relative convergence tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.config)
        .map_err(|source| CliError::ConfigRead { path: args.config.clone(), source })?;
    let mut config: StudyConfig = serde_json::from_str(&text)
        .map_err(|source| CliError::ConfigParse { path: args.config.clone(), source })?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(r) = args.replications {
        config.replications = r;
    }
    if let Some(rho) = args.rho {
        config.solver.rho = rho;
    }
    if let Some(it) = args.max_iter {
        config.solver.max_iter = it;
    }
    if let Some(tol) = args.tol {
        config.solver.tol_rel = tol;
    }
    config.validate()?;
    println!("{}", serde_json::to_string_pretty(&config).expect("config serializes"));

    let rows = mbs::run_rmse_study(&config)?;
    fs::create_dir_all(&args.output)
        .map_err(|source| CliError::Write { path: args.output.clone(), source })?;
    let csv_path = args.output.join("study.csv");
    let mut buf = Vec::new();
    mbs::simulate::write_csv(&rows, &mut buf)?;
    data::write_text(&csv_path, std::str::from_utf8(&buf).expect("csv is utf-8"))?;
    data::write_text(&args.output.join("study.json"), &mbs::simulate::to_json(&rows))?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(args) => fit::run(*args),
        Command::Simulate(args) => simulate(args),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })
}
