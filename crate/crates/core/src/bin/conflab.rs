use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = conflab::cli::Cli::parse();
    match conflab::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
