use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(concept_lens_cli::main_with(std::env::args_os()))
}
