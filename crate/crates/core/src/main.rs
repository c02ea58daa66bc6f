fn main() -> std::process::ExitCode {
    momix::cli::run(std::env::args_os())
}
