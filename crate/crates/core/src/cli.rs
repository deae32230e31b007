//! Command-line front end. `run` is separate from `main` so tests can drive
//! it with in-memory streams.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ascending::run_ascending;
use crate::error::{Error, Result};
use crate::market::{validate_market, Market};
use crate::mechanism::Mechanism;
use crate::reduction::run_reduction;
use crate::sim::{emit_csv, run_experiment_with_workers, ExperimentSpec, GftScale};
use crate::verify::threshold_probe;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sbbmarket", version, about = "Strongly budget-balanced multi-sided markets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one mechanism on a market and print the outcome as JSON.
    Run {
        #[arg(long)]
        market: PathBuf,
        #[arg(long, default_value = "extcomp")]
        mechanism: Mechanism,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the mechanism's steps to stderr as JSON lines.
        #[arg(long)]
        trace: bool,
    },
    /// Run a simulation experiment and write the summary CSV.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Report mean GFT instead of mean GFT / OPT.
        #[arg(long)]
        absolute: bool,
    },
    /// Run a simulation experiment and print a comparison table.
    Compare {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Probe agents' reports for truthfulness.
    Probe {
        #[arg(long)]
        market: PathBuf,
        /// Probe a single agent instead of all of them.
        #[arg(long)]
        agent: Option<String>,
        #[arg(long, default_value = "extcomp")]
        mechanism: Mechanism,
    },
    /// Check a market file.
    Validate {
        #[arg(long)]
        market: PathBuf,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_INVALID,
    }
}

fn json_line(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<()> {
    let line = serde_json::to_string(value).expect("serializable");
    writeln!(out, "{line}").map_err(|e| Error::io("<output>", e))
}

fn execute(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let io = |e| Error::io("<output>", e);
    match cmd {
        Command::Run {
            market,
            mechanism,
            seed,
            trace,
        } => {
            let market = Market::read(&market)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let outcome = match mechanism {
                Mechanism::Extcomp => {
                    let (r, o) = run_reduction(&market, &mut rng)?;
                    if trace {
                        for e in &r.trace {
                            json_line(err, e)?;
                        }
                    }
                    o
                }
                Mechanism::Ascprice => {
                    let (r, o) = run_ascending(&market, &mut rng)?;
                    if trace {
                        for e in &r.state.round_log {
                            json_line(err, e)?;
                        }
                    }
                    o
                }
                Mechanism::Mcafee => mechanism.run(&market, &mut rng)?,
            };
            let text = serde_json::to_string_pretty(&outcome.to_json(&market)).expect("serializable");
            writeln!(out, "{text}").map_err(io)?;
        }
        Command::Simulate { spec, out: path, absolute } => {
            let spec = ExperimentSpec::read(&spec)?;
            let table = run_experiment_with_workers(&spec, None)?;
            let scale = if absolute { GftScale::Absolute } else { GftScale::Ratio };
            emit_csv(&table, &path, scale)?;
        }
        Command::Compare { spec } => {
            let spec = ExperimentSpec::read(&spec)?;
            let table = run_experiment_with_workers(&spec, None)?;
            writeln!(out, "{:>6} {:>10} {:>10} {:>10} {:>10}", "n", "mechanism", "k", "deals", "gft/opt").map_err(io)?;
            for row in &table.rows {
                for m in &row.mechanisms {
                    writeln!(
                        out,
                        "{:>6} {:>10} {:>10.4} {:>10.4} {:>10.6}",
                        row.n,
                        m.mechanism.name(),
                        row.mean_k.to_f64(),
                        m.mean_deals.to_f64(),
                        m.mean_ratio.to_f64()
                    )
                    .map_err(io)?;
                }
            }
        }
        Command::Probe {
            market,
            agent,
            mechanism,
        } => {
            if !mechanism.is_budget_balanced() {
                return Err(Error::Unsupported(format!("cannot probe {mechanism}")));
            }
            let market = Market::read(&market)?;
            let ids: Vec<String> = match agent {
                Some(id) => vec![id],
                None => market.agents.iter().map(|a| a.id.clone()).collect(),
            };
            let mut all_truthful = true;
            for id in &ids {
                let report = threshold_probe(&market, |m| mechanism.allocate(m), id, None)?;
                all_truthful &= report.truthful();
                json_line(out, &report)?;
            }
            if !all_truthful {
                return Ok(EXIT_INVALID);
            }
        }
        Command::Validate { market } => {
            let market = Market::read_unchecked(&market)?;
            let violations = validate_market(&market);
            for v in &violations {
                let level = if v.is_error() { "error" } else { "warning" };
                writeln!(out, "{level}: {v}").map_err(io)?;
            }
            if violations.iter().any(|v| v.is_error()) {
                return Ok(EXIT_INVALID);
            }
            writeln!(out, "ok").map_err(io)?;
        }
    }
    Ok(EXIT_OK)
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
