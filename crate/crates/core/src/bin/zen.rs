fn main() -> std::process::ExitCode {
    zen::cli::main()
}
