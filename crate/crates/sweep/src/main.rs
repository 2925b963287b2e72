use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(misprice_sweep::cli::run(std::env::args_os()))
}
