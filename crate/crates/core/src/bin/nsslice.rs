fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NSSLICE_LOG", "error")).init();
    std::process::exit(nsslice::cli::main_with_args(std::env::args_os()));
}
