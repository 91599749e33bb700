use std::process::ExitCode;

use clap::Parser;
use treewalk_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(status) => ExitCode::from(status as u8),
        Err(e) => {
            eprintln!("treewalk {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
