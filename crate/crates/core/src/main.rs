use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let args = fairscore::cli::Args::parse();
    match fairscore::cli::run(&args, &mut std::io::stdout()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
