use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(constep_cli::commands::run_cli(std::env::args_os()) as u8)
}
