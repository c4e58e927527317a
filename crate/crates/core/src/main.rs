fn main() {
    std::process::exit(droughtcast::cli::run(std::env::args_os()));
}
