//! `hybridnl`: solve, verify and sweep hybrid nonlocal problems from a JSON
//! config. Exit codes: 0 pass, 1 usage or config error, 2 a check failed,
//! 3 a numerical method did not converge.

mod commands;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hybrid_nonlocal::ProblemSpec;
use serde::Serialize;
use serde_json::Value;

use commands::{CommandError, CommandOutput};
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "hybridnl",
    version,
    about = "Hybrid nonlocal variational problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Galerkin system and report the solution.
    Solve(CommonArgs),
    /// Run the energy identity and inequality sweeps over the config grid.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// Multiply C1 by this factor (negative control).
        #[arg(long, hide = true)]
        tamper_c1: Option<f64>,
    },
    /// Estimate the discrete Poincaré constant under refinement.
    Poincare(CommonArgs),
    /// Tabulate J along a nested mesh ladder.
    Converge(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output format; `converge` defaults to csv, everything else to json.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Serialize)]
struct RunReport<'a> {
    command: &'a str,
    spec_echo: &'a ProblemSpec,
    results: Value,
    wall_time_ms: u64,
    version: &'static str,
}

fn write_output(
    path: &Path,
    format: Format,
    name: &str,
    cfg: &RunConfig,
    out: CommandOutput,
    started: Instant,
) -> Result<(), CommandError> {
    let text = match format {
        Format::Csv => out.csv,
        Format::Json => {
            let report = RunReport {
                command: name,
                spec_echo: &cfg.spec,
                results: out.results,
                wall_time_ms: started.elapsed().as_millis() as u64,
                version: env!("CARGO_PKG_VERSION"),
            };
            serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
        }
    };
    fs::write(path, text)
        .map_err(|e| CommandError::Io(format!("cannot write {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<bool, CommandError> {
    let started = Instant::now();
    let (name, common, tamper) = match &cli.command {
        Command::Solve(c) => ("solve", c, None),
        Command::Verify { common, tamper_c1 } => ("verify", common, *tamper_c1),
        Command::Poincare(c) => ("poincare", c, None),
        Command::Converge(c) => ("converge", c, None),
    };
    let cfg = RunConfig::load(&common.config, common.seed)?;
    let default_format = if name == "converge" {
        Format::Csv
    } else {
        Format::Json
    };
    let out = match name {
        "solve" => commands::cmd_solve(&cfg)?,
        "verify" => commands::cmd_verify(&cfg, tamper)?,
        "poincare" => commands::cmd_poincare(&cfg)?,
        _ => commands::cmd_converge(&cfg)?,
    };
    let passed = out.passed;
    let format = common.format.unwrap_or(default_format);
    write_output(&common.out, format, name, &cfg, out, started)?;
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("hybridnl: checks failed; see the output file for details");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("hybridnl: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
