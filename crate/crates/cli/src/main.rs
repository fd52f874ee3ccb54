use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(polyprotect_cli::run(std::env::args_os()))
}
