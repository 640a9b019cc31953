use std::process::ExitCode;

use clap::Parser;
use ksgdiffuse_cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{}", failure.diagnostic());
            ExitCode::from(failure.exit_code() as u8)
        }
    }
}
