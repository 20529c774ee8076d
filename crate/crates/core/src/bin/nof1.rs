fn main() -> std::process::ExitCode {
    nof1::cli::main()
}
