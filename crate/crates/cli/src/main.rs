mod args;
mod commands;
mod error;
mod figures;

use std::process::ExitCode;

use clap::Parser;
use collusion_core::par;

use crate::args::{Cli, Command};
use crate::error::CliResult;

fn run(cli: Cli) -> CliResult<()> {
    let inv = args::resolve(cli)?;
    if let Some(n) = inv.threads {
        if !par::configure_threads(n) && par::parallel_enabled() {
            eprintln!("warning: worker pool already initialized; ignoring thread count {n}");
        }
    }
    match inv.command {
        Command::Benchmarks(a) => commands::benchmarks(a),
        Command::Frontier(a) => commands::frontier(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Deviate(a) => commands::deviate(a),
        Command::Figures(a) => figures::figures(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
