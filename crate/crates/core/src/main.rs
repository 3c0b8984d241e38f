use std::process::ExitCode;

fn main() -> ExitCode {
    ocmg::cli::main_with_args(std::env::args_os())
}
