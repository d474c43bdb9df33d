use clap::error::ErrorKind;
use clap::Parser;

use rrr_bench::cli::{run_cli, Cli, EXIT_USAGE};

fn main() {
    match Cli::try_parse() {
        Ok(cli) => std::process::exit(run_cli(&cli)),
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            std::process::exit(0);
        }
        Err(e) => {
            eprint!("{e}");
            std::process::exit(EXIT_USAGE);
        }
    }
}
