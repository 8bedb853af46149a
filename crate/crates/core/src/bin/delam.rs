fn main() {
    env_logger::init();
    std::process::exit(delam_core::harness::cli::cli(std::env::args_os()));
}
