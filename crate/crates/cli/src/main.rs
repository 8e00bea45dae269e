//! `priceopt`: fit demand models, optimize prices, run the simulation studies
//! and export solver files.
//!
//! Exit codes: 0 success, 2 bad input or flags, 3 fit failure, 4 SDP solve
//! failure, 5 no feasible rounding, 6 output IO. Failures print one JSON line
//! on stderr: `{"error": kind, "exit_code": n, "message": text}`.

mod commands;
mod error;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::CliError;
use settings::Settings;

#[derive(Debug, Parser)]
#[command(name = "priceopt", version, about = "Price optimization with SDP relaxations")]
struct Cli {
    /// JSON file with default values for the flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a demand model to a sales history (writes model.json, fit_report.json).
    Fit(Settings),
    /// Choose prices for a fitted model (writes report.json, problem.json, timings.json).
    Optimize(Settings),
    /// Run the estimation or scalability study (writes CSV tables).
    Simulate(Settings),
    /// Write the pricing problem as CPLEX LP and SDPA sparse files.
    Export(Settings),
}

/// A subcommand body; returns the files it wrote.
type Handler = fn(&Settings) -> Result<Vec<PathBuf>, CliError>;

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let (settings, cmd): (Settings, Handler) = match cli.command {
        Command::Fit(s) => (s, commands::fit),
        Command::Optimize(s) => (s, commands::optimize),
        Command::Simulate(s) => (s, commands::simulate),
        Command::Export(s) => (s, commands::export),
    };
    let settings = match &cli.config {
        Some(path) if !path.is_file() => {
            return Err(CliError::Usage(format!("--config: no such file {}", path.display())))
        }
        Some(path) => settings.with_config(path)?,
        None => settings,
    };
    settings.check_paths()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.threads()?)
        .build()
        .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    pool.install(|| cmd(&settings))
}

fn fail(err: &CliError) -> ExitCode {
    let line = serde_json::json!({
        "error": err.kind(),
        "exit_code": err.exit_code(),
        "message": err.to_string(),
    });
    eprintln!("{line}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            return fail(&CliError::Usage(first.to_string()));
        }
    };
    match run(cli) {
        Ok(written) => {
            for path in written {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
