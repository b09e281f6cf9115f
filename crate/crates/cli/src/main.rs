//! `disorder`: command-line driver for the disorder detection toolkit.
//!
//! Every command reads a TOML model file, echoes its resolved
//! configuration and writes its artifacts to `--out`. Exit status is 0 on
//! success, 1 for invalid input, 2 when a state space or enumeration
//! exceeds its budget, and 3 when a contract or self-check fails.

mod commands;
mod config;
mod output;
mod selfcheck;

use std::process::ExitCode;

use clap::Parser;

use config::{Cli, RunConfig};

/// Why a run failed; decides the exit status.
#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    Budget(String),
    Contract(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Budget(_) => 2,
            Failure::Contract(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Budget(m) | Failure::Contract(m) => m,
        }
    }
}

impl From<disorder_core::Error> for Failure {
    fn from(e: disorder_core::Error) -> Self {
        use disorder_core::Error;
        match e {
            e if e.is_budget() => Failure::Budget(e.to_string()),
            Error::CycleUnresolved { .. } => Failure::Contract(e.to_string()),
            e => Failure::Invalid(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = RunConfig::resolve(cli)?;
    if let Some(workers) = config.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Failure::Invalid(format!("cannot set up {workers} workers: {e}")))?;
    }
    print!("{}", config.echo());
    let written = commands::dispatch(&config)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}
