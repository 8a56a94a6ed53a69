fn main() -> std::process::ExitCode {
    env_logger::init();
    nodal_tangency::cli::main()
}
