fn main() -> std::process::ExitCode {
    cscore::cli::main_entry()
}
