//! `cqed`: batch front end for the cqed-core fitting pipelines.
//!
//! stdout carries only the result JSON. Failures go to stderr as
//! `{"error": {"code", "message", "exit_code"}}`. Exit codes: 0 ok,
//! 1 fit failure or non-convergence, 2 input error, 3 config error.

mod commands;
mod config;
mod io;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "cqed", version, about = "Cavity-QED lineshape fitting pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON pipeline configuration; relative input paths resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV and JSON artifacts (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured seed (simulate, verify).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel fits.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Doublet fits over the σ_SD grid: linewidth table and SSR curve.
    FitSpectrum,
    /// Vibration broadening from a cavity transmission spectrum.
    FitCavity,
    /// g against instantaneous linewidth from a spectral envelope.
    FitEnvelope,
    /// g against instantaneous linewidth from a cavity decay.
    FitDecay,
    /// Crossing of the envelope and decay g curves.
    Cross,
    /// Purcell factors from lifetimes and from cavity parameters.
    Purcell,
    /// Saturation fit of intensity against power.
    Saturation,
    /// Power-law exponent of intensity against power.
    Powerlaw,
    /// Seeded synthetic spectrum, envelope, decay and IRF.
    Simulate,
    /// Closed forms against independent oracles.
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::FitSpectrum => "fit-spectrum",
            Command::FitCavity => "fit-cavity",
            Command::FitEnvelope => "fit-envelope",
            Command::FitDecay => "fit-decay",
            Command::Cross => "cross",
            Command::Purcell => "purcell",
            Command::Saturation => "saturation",
            Command::Powerlaw => "powerlaw",
            Command::Simulate => "simulate",
            Command::Verify => "verify",
        }
    }
}

/// A failed invocation, reported on stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: &'static str,
    pub exit: u8,
    pub message: String,
}

impl Failure {
    pub fn input(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            exit: 2,
            message: message.into(),
        }
    }

    pub fn config(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            exit: 3,
            message: message.into(),
        }
    }

    pub fn fit(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            exit: 1,
            message: message.into(),
        }
    }
}

impl From<cqed_core::Error> for Failure {
    fn from(e: cqed_core::Error) -> Self {
        use cqed_core::Error as E;
        let message = e.to_string();
        match e {
            E::Io { ref source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                Failure::input("input_not_found", message)
            }
            E::Io { .. } => Failure::input("io_error", message),
            E::Parse(_) => Failure::input("input_invalid", message),
            E::InvalidParameter { .. } | E::Precondition(_) => Failure::config("config_invalid", message),
            E::NoCrossing { .. } => Failure::fit("no_crossing", message),
            E::NonConvergence { .. } => Failure::fit("not_converged", message),
            E::Domain(_) | E::Degenerate(_) | E::NoDoublet(_) => Failure::fit("fit_failed", message),
        }
    }
}

/// Result JSON plus whether every underlying fit converged.
pub struct Outcome {
    pub result: serde_json::Value,
    pub converged: bool,
}

fn report(f: &Failure) {
    eprintln!(
        "{}",
        json!({"error": {"code": f.code, "message": f.message, "exit_code": f.exit}})
    );
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let f = Failure::config("usage", e.to_string().trim_end().to_string());
            report(&f);
            return ExitCode::from(f.exit);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            let f = Failure::config("config_invalid", "--threads must be at least 1");
            report(&f);
            return ExitCode::from(f.exit);
        }
        // Only fails if a global pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let ctx = match config::Context::load(cli.config.as_deref(), cli.out, cli.seed) {
        Ok(c) => c,
        Err(f) => {
            report(&f);
            return ExitCode::from(f.exit);
        }
    };
    match commands::run(cli.command, &ctx) {
        Ok(o) => {
            let text = serde_json::to_string_pretty(&o.result).expect("result JSON serializes");
            // A closed pipe on stdout is the reader's choice, not a failure.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            if o.converged {
                ExitCode::SUCCESS
            } else {
                report(&Failure::fit("not_converged", "at least one fit did not converge; see the result JSON"));
                ExitCode::from(1)
            }
        }
        Err(f) => {
            report(&f);
            ExitCode::from(f.exit)
        }
    }
}
