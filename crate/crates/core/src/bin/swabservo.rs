fn main() -> std::process::ExitCode {
    swabservo::cli::main()
}
