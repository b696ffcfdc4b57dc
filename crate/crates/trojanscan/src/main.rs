use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(trojanscan::cli::run(std::env::args()) as u8)
}
