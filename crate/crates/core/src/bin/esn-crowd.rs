fn main() -> std::process::ExitCode {
    esn_crowd::cli::main()
}
