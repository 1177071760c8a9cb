use std::process::ExitCode;

use clap::Parser;
use quasilin_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.into_config().and_then(|c| run(&c)) {
        Ok(summary) => {
            print!("{}", toml::to_string(&summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = serde_json::to_string(&e.record()).expect("error record serializes");
            eprintln!("{record}");
            ExitCode::from(e.exit_code())
        }
    }
}
