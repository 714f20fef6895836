fn main() -> std::process::ExitCode {
    mirec::cli::main()
}
