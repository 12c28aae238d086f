use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = trialmatch::cli::Cli::parse();
    match trialmatch::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
