use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = sdanet_cli::Cli::parse();
    match sdanet_cli::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("sdanet: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
