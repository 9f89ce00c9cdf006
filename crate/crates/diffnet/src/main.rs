use std::process::ExitCode;

fn main() -> ExitCode {
    diffnet::cli::run()
}
