use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(combmem_cli::run(std::env::args_os()))
}
