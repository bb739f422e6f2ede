use std::process::ExitCode;

use clap::Parser;
use ica_mlp::cli::{self, Cli};

fn main() -> ExitCode {
    let args = Cli::parse();
    match cli::run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let cat = e.category();
            eprintln!("error[{}]: {e}", cat.as_str());
            ExitCode::from(cat.exit_code() as u8)
        }
    }
}
