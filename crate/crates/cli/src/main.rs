//! Batch front end of the heston-galerkin solver.
//!
//! Exit codes: 0 success, 1 malformed configuration or unwritable output,
//! 2 validation failure, 3 violated bound or numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use heston_galerkin::Error;

use crate::commands::Status;
use crate::config::ConfigError;
use crate::output::Artifacts;

#[derive(Parser, Debug)]
#[command(name = "heston-galerkin", version, about = "Weighted spectral-Galerkin solver for the Heston pricing PDE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Validate,
    Check,
    Solve,
    Price,
    Shift,
    Complete,
    Mc,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Admissibility report of the parameters and weight.
    Validate(Args),
    /// Weighted inequality suite and coercivity certification.
    Check(Args),
    /// Real evolution of the projected payoff with envelope checks.
    Solve(Args),
    /// Price surface and comparison with the closed form.
    Price(Args),
    /// Complex-shift and complex-path solves with envelope checks.
    Shift(Args),
    /// Sign structure of the price derivative in the variance.
    Complete(Args),
    /// Monte Carlo estimate.
    Mc(Args),
}

#[derive(clap::Args, Debug)]
struct Args {
    /// JSON run configuration.
    config: PathBuf,
    /// Replaces the configured output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl Command {
    fn split(self) -> (Kind, Args) {
        match self {
            Command::Validate(a) => (Kind::Validate, a),
            Command::Check(a) => (Kind::Check, a),
            Command::Solve(a) => (Kind::Solve, a),
            Command::Price(a) => (Kind::Price, a),
            Command::Shift(a) => (Kind::Shift, a),
            Command::Complete(a) => (Kind::Complete, a),
            Command::Mc(a) => (Kind::Mc, a),
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 1;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::InvalidParameter { .. } | Error::Inadmissible(_) | Error::Domain(_) | Error::OrderOutOfRange { .. }) => 2,
        Some(Error::Io(_)) => 1,
        Some(_) => 3,
        None => 1,
    }
}

type Runner = fn(&config::RunConfig, &mut Artifacts<'_>) -> anyhow::Result<Status>;

fn run(kind: Kind, args: Args) -> anyhow::Result<Status> {
    let mut cfg = config::load(&args.config)?;
    if let Some(d) = args.output_dir {
        cfg.output_dir = d;
    }
    let (name, f): (&str, Runner) = match kind {
        Kind::Validate => ("validate", commands::validate),
        Kind::Check => ("check", commands::check),
        Kind::Solve => ("solve", commands::solve),
        Kind::Price => ("price", commands::price),
        Kind::Shift => ("shift", commands::shift),
        Kind::Complete => ("complete", commands::complete),
        Kind::Mc => ("mc", commands::mc),
    };
    let mut out = Artifacts::new(name, &cfg)?;
    let status = f(&cfg, &mut out)?;
    for p in out.written() {
        println!("wrote {}", p.display());
    }
    Ok(status)
}

fn main() -> ExitCode {
    let (kind, args) = Cli::parse().command.split();
    match run(kind, args) {
        Ok(Status::Pass) => ExitCode::SUCCESS,
        Ok(Status::Inadmissible(msg)) => {
            eprintln!("validation failure: {msg}");
            ExitCode::from(2)
        }
        Ok(Status::Violation(msg)) => {
            eprintln!("violation: {msg}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
