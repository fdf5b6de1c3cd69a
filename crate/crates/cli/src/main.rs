mod args;
mod commands;

use std::process::ExitCode;

use args::Parsed;

fn fail(e: cmawizard::Error) -> ExitCode {
    eprintln!("error: {}", e.to_string().replace('\n', " "));
    ExitCode::from(1)
}

fn main() -> ExitCode {
    match args::parse(std::env::args_os().collect()) {
        Parsed::Clap(e) => e.exit(),
        Parsed::Config(e) => fail(e),
        Parsed::Cli(cli) => match commands::dispatch(&cli) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(e),
        },
    }
}
