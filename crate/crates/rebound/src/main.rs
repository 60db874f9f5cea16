use std::process::ExitCode;

fn main() -> ExitCode {
    rebound::cli::run_cli(std::env::args_os())
}
