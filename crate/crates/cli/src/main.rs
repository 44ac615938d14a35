//! `renewal`: certified convergence rates for renewal processes, and their
//! Monte-Carlo verification.

// `!(a > b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

#[derive(Parser, Debug)]
#[command(name = "renewal", version, about = "Explicit exponential convergence bounds for the renewal theorem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `simulation.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: `output` from the config, else the
    /// current directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the simulations.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only errors on stderr
    #[arg(long, global = true, conflicts_with = "debug")]
    quiet: bool,
    /// Also logs every written coupling trace.
    #[arg(long, global = true)]
    debug: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Assemble the certificate for fixed (β, δ, θ).
    Bound,
    /// Search (β, δ, θ) and the component for the largest certified rate.
    Optimize,
    /// Estimate the coupling-time tail and the renewal measure.
    Simulate,
    /// Run every Monte-Carlo check of the bounds.
    Verify,
    /// Compare the certified rate with rates fitted to simulation output.
    Report,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 3,
            CliError::Usage(_) => 64,
            CliError::Runtime(_) | CliError::Io(_) => 1,
        }
    }
}

/// How a command that ran to completion ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Infeasible,
    ChecksFailed,
}

impl Status {
    fn exit_code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::Infeasible => 2,
            Status::ChecksFailed => 1,
        }
    }
}

pub struct Outcome {
    pub status: Status,
    pub files: Vec<String>,
    pub details: serde_json::Value,
}

/// What every invocation leaves behind, success or not.
#[derive(Serialize)]
struct Summary<'a> {
    command: Command,
    status: &'a str,
    exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
    files: Vec<String>,
    details: serde_json::Value,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else if cli.debug {
        log::LevelFilter::Debug
    } else {
        log::LevelFilter::Info
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    if let Some(n) = cli.threads {
        if n == 0 || rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("error: --threads must be a positive integer");
            return ExitCode::from(64);
        }
    }

    let (out, result) = run(&cli);
    let (status, code, message, files, details) = match result {
        Ok(o) => {
            let label = match o.status {
                Status::Ok => "ok",
                Status::Infeasible => "infeasible",
                Status::ChecksFailed => "checks_failed",
            };
            (label, o.status.exit_code(), None, o.files, o.details)
        }
        Err(e) => {
            log::error!("{e}");
            let label = match e {
                CliError::Config(_) => "config_error",
                CliError::Usage(_) => "usage_error",
                _ => "error",
            };
            (label, e.exit_code(), Some(e.to_string()), Vec::new(), serde_json::Value::Null)
        }
    };
    let summary = Summary {
        command: cli.command,
        status,
        exit_code: code,
        message,
        files,
        details,
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    if let Some(dir) = out {
        if std::fs::create_dir_all(&dir).is_ok() {
            let _ = std::fs::write(dir.join("summary.json"), format!("{text}\n"));
        }
    }
    println!("{text}");
    ExitCode::from(code)
}

fn run(cli: &Cli) -> (Option<PathBuf>, Result<Outcome, CliError>) {
    let cfg = match &cli.config {
        Some(path) => match config::RunConfig::load(path) {
            Ok(c) => Some(c),
            Err(e) => return (cli.out.clone(), Err(e)),
        },
        None => None,
    };
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.as_ref().and_then(|c| c.output.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    if let Err(e) = std::fs::create_dir_all(&out) {
        return (None, Err(e.into()));
    }
    let ctx = commands::Context {
        out: out.clone(),
        seed: cli.seed,
        debug: cli.debug,
    };
    let result = match (cli.command, cfg) {
        (Command::Report, cfg) => commands::report(&ctx, cfg.as_ref()),
        (_, None) => Err(CliError::Usage("--config is required for this command".into())),
        (Command::Bound, Some(cfg)) => commands::bound(&ctx, &cfg),
        (Command::Optimize, Some(cfg)) => commands::optimize(&ctx, &cfg),
        (Command::Simulate, Some(cfg)) => commands::simulate(&ctx, &cfg),
        (Command::Verify, Some(cfg)) => commands::verify(&ctx, &cfg),
    };
    (Some(out), result)
}
