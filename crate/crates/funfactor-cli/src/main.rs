use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = funfactor_cli::Cli::parse();
    match funfactor_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
