use std::process::ExitCode;

fn main() -> ExitCode {
    toporoute_cli::main_entry()
}
