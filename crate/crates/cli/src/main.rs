//! `sizereg` command-line driver.

mod args;
mod commands;
mod error;
mod workspace;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use error::CliResult;

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Prepare(a) => commands::prepare(a),
        Command::Coarsen(a) => commands::coarsen(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Report(a) => commands::report(a),
        Command::AnalyzeCka(a) => commands::analyze_cka(a),
        Command::AblateRatios(a) => commands::ablate_ratios(a),
        Command::AblateCoarsener(a) => commands::ablate_coarsener(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
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
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
