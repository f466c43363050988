use std::process::ExitCode;

use clap::Parser;
use pfn_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            println!("{}: outputs in {}", cli.command.name(), out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.to_exit()
        }
    }
}
