fn main() {
    env_logger::init();
    std::process::exit(pixelgame::cli::run_from(std::env::args_os()));
}
