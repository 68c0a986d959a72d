use std::process::ExitCode;

use clap::Parser;
use scoretest_cli::{execute, RunConfig};

fn main() -> ExitCode {
    // clap exits with code 2 on usage errors and 0 for --help / --version.
    let config = RunConfig::parse();
    match execute(&config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("scoretest: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
