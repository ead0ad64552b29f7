use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(stochosc_cli::main_with_env())
}
