fn main() -> std::process::ExitCode {
    lrp_cli::app::main_with_args(std::env::args_os())
}
