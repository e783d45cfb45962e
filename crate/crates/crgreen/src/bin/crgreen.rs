fn main() -> std::process::ExitCode {
    crgreen::cli::main()
}
