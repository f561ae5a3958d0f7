fn main() -> std::process::ExitCode {
    tutorbench::cli::main_entry()
}
