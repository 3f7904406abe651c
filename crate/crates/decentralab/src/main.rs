fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DECENTRALAB_LOG", "warn")).init();
    std::process::exit(decentralab::run(std::env::args_os()));
}
