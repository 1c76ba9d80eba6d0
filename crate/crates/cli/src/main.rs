mod args;
mod commands;
mod dataset;
mod failure;

use std::panic;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use gazelab::Config;

use crate::args::Cli;
use crate::failure::{Classify, Failure};

pub struct Context {
    pub config: Config,
    pub json: bool,
    pub verbose: u8,
}

impl Context {
    pub fn log(&self, msg: impl FnOnce() -> String) {
        if self.verbose > 0 {
            eprintln!("{}", msg());
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = match &cli.config {
        Some(path) => Config::load(path).data()?,
        None => Config::default(),
    };
    let ctx = Context {
        config,
        json: cli.json,
        verbose: cli.verbose,
    };
    commands::dispatch(&ctx, cli.command)
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
    let json = cli.json;
    let outcome = panic::catch_unwind(|| run(cli));
    let failure = match outcome {
        Ok(Ok(())) => return ExitCode::SUCCESS,
        Ok(Err(f)) => f,
        Err(_) => Failure::Internal(anyhow::anyhow!("unexpected panic")),
    };
    if json {
        let doc = serde_json::json!({ "error": failure.to_string(), "kind": failure.kind() });
        eprintln!("{doc}");
    } else {
        eprintln!("error ({}): {failure}", failure.kind());
    }
    ExitCode::from(failure.exit_code() as u8)
}
