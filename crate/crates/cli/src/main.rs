fn main() -> std::process::ExitCode {
    shrinker_cli::main()
}
