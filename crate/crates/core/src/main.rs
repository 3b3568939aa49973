use std::process::ExitCode;

use clap::Parser;
use modispi::cli::{run, Cli, Outcome};
use modispi::Error;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::RecordFailures(n)) => {
            eprintln!("{n} record(s) failed; see the run report");
            ExitCode::from(1)
        }
        Err(Error::InvalidInput(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
