fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CIRCADIA_LOG", "warn")).init();
    std::process::exit(circadia::cli::run(std::env::args_os()));
}
