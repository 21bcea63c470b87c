//! `rough` command-line driver.
//!
//! Exit codes: 0 success, 1 usage, 2 data (unreadable or inconsistent
//! input), 3 numerical (non-finite states, failed convergence).

mod args;
mod commands;
mod output;

use std::fmt::Display;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;
use rough_core::Error;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(e: impl Display) -> Self {
        Failure { code: 1, message: e.to_string() }
    }

    pub fn data(e: impl Display) -> Self {
        Failure { code: 2, message: e.to_string() }
    }

    pub fn numerical(e: impl Display) -> Self {
        Failure { code: 3, message: e.to_string() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_)
            | Error::InsufficientScales { .. }
            | Error::IndexOutOfRange { .. }
            | Error::IndexOrder(_) => Failure::usage(e),
            Error::NonFinite { .. } | Error::NonFiniteState { .. } | Error::DerivativeCheck { .. } => {
                Failure::numerical(e)
            }
            _ => Failure::data(e),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(Failure::usage)?;
    }
    commands::dispatch(cli)
}
