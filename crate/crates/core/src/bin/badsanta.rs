use std::process::ExitCode;

use badsanta::cli::{execute, Cli, ExperimentConfig};
use clap::Parser;

fn main() -> ExitCode {
    let config = match ExperimentConfig::try_from(Cli::parse()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match execute(&config) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
