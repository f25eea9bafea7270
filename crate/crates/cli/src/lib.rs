//! Command-line driver for the query-aware paged KV cache toolkit.
//!
//! Exit codes: 0 success, 1 property/verification failure, 2 configuration
//! error.

pub mod commands;
pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use tinykv_core::error::Result;

use config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "tinykv",
    about = "Query-aware paged KV cache: verification, sweeps, serving simulation, cost models",
    version
)]
pub struct Cli {
    /// Flat key=value config file; see README for the key table.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Override the top-level seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Write the machine-readable report here.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Output format for --out (verify always writes JSON).
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: OutputFormat,

    /// Apply a key=value override after the config file (repeatable,
    /// last wins).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the randomized invariant suites and report pass/fail per suite.
    Verify {
        /// Test hook: corrupt one page's metadata first, so the box
        /// containment suite must fail.
        #[arg(long, hide = true)]
        corrupt_metadata: bool,
    },
    /// Grid over page sizes and selection ratios on one fixed trace.
    Sweep,
    /// Multi-session Poisson serving simulation, one run per policy.
    Simulate,
    /// Evaluate the analytic cost formulas at one operating point.
    Cost,
    /// Wall-clock micro-timing of scoring, gather and sparse attention.
    Bench,
}

/// Outcome of a successfully executed command.
pub enum CmdStatus {
    Ok,
    VerificationFailed,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_overrides(&cli.sets)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_out(path: &Path, contents: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

/// Execute the parsed command; printing goes to stdout, reports to `--out`.
pub fn execute(cli: &Cli) -> Result<CmdStatus> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Verify { corrupt_metadata } => {
            let report = commands::verify::run(&cfg, *corrupt_metadata)?;
            for suite in &report.suites {
                let status = if suite.passed { "PASS" } else { "FAIL" };
                println!(
                    "{status} {} ({} cases): {}",
                    suite.name, suite.cases, suite.detail
                );
            }
            if let Some(out) = &cli.out {
                write_out(out, &report.to_json()?)?;
            }
            if report.all_passed {
                println!("verify: all suites passed");
                Ok(CmdStatus::Ok)
            } else {
                let failed: Vec<&str> = report
                    .suites
                    .iter()
                    .filter(|s| !s.passed)
                    .map(|s| s.name.as_str())
                    .collect();
                println!("verify: FAILED ({})", failed.join(", "));
                Ok(CmdStatus::VerificationFailed)
            }
        }
        Command::Sweep => {
            let report = commands::sweep::run(&cfg)?;
            let rendered = match cli.format {
                OutputFormat::Csv => report.to_csv(),
                OutputFormat::Json => report.to_json()?,
            };
            match &cli.out {
                Some(out) => {
                    write_out(out, &rendered)?;
                    println!(
                        "sweep: {} grid points -> {}",
                        report.rows.len(),
                        out.display()
                    );
                }
                None => print!("{rendered}"),
            }
            Ok(CmdStatus::Ok)
        }
        Command::Simulate => {
            let reports = commands::simulate::run(&cfg)?;
            print!("{}", commands::simulate::render_table(&reports));
            if let Some(out) = &cli.out {
                let rendered = match cli.format {
                    OutputFormat::Csv => commands::simulate::to_csv(&reports),
                    OutputFormat::Json => commands::simulate::to_json(&reports)?,
                };
                write_out(out, &rendered)?;
            }
            Ok(CmdStatus::Ok)
        }
        Command::Cost => {
            let report = commands::cost::run(&cfg)?;
            print!("{}", report.render());
            if let Some(out) = &cli.out {
                let rendered = match cli.format {
                    OutputFormat::Csv => report.to_csv(),
                    OutputFormat::Json => report.to_json()?,
                };
                write_out(out, &rendered)?;
            }
            Ok(CmdStatus::Ok)
        }
        Command::Bench => {
            let report = commands::bench::run(&cfg)?;
            print!("{}", report.render());
            if let Some(out) = &cli.out {
                write_out(out, &report.to_json()?)?;
            }
            Ok(CmdStatus::Ok)
        }
    }
}

/// Run and map to the documented exit codes.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(CmdStatus::Ok) => 0,
        Ok(CmdStatus::VerificationFailed) => 1,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_config() {
                2
            } else {
                1
            }
        }
    }
}
