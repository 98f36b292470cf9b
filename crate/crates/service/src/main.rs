use std::process::ExitCode;

fn main() -> ExitCode {
    groupsense::cli::main()
}
