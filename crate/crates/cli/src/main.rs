use std::fs;
use std::process::ExitCode;

use clap::Parser;
use ivqr_cli::{commands, table, Cli, CliError, Command, RunConfig};

fn run() -> Result<(), CliError> {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // --help and --version land here too
            let code = e.exit_code();
            let _ = e.print();
            return if code == 0 { Ok(()) } else { Err(CliError::Config("invalid command line".into())) };
        }
    };
    let config = RunConfig::from_cli(&cli)?;
    let report = commands::run(&config)?;
    let json = report.to_json();
    let text = serde_json::to_string_pretty(&json).expect("report serialises");
    if let (Some(path), false) = (&config.output, config.command == Command::Simulate) {
        fs::write(path, &text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    if config.json {
        println!("{text}");
    } else {
        print!("{}", table::render(&json));
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ivqr: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
