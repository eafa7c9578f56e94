fn main() {
    env_logger::init();
    std::process::exit(phint::cli::run(std::env::args_os()));
}
