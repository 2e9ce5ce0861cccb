// SPDX-License-Identifier: MIT OR Apache-2.0

mod args;
mod cmd;
mod fail;
mod io;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use fail::{CliResult, EXIT_USAGE};

fn dispatch(cli: Cli) -> CliResult {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Memory(c) => cmd::memory::run(c, out, cli.format),
        Command::Eval(c) => cmd::eval::run(c, out, cli.format),
        Command::Tune(c) => cmd::tune::run(c, cli.seed, out, cli.format),
        Command::Diag(c) => cmd::diag::run(c, out, cli.format),
        Command::Kappa(c) => cmd::kappa::run(c, out, cli.format),
        Command::Serve(a) => cmd::serve::run(a),
        Command::Fixture(c) => cmd::fixture::run(c, cli.seed, out),
    }
}

/// The error chain on one line, dropping causes already quoted by their parent.
fn describe(error: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in error.chain() {
        let text = cause.to_string();
        if msg.is_empty() {
            msg = text;
        } else if !msg.contains(&text) {
            msg = format!("{msg}: {text}");
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("gxli: {}", describe(&f.error));
            ExitCode::from(f.code)
        }
    }
}
