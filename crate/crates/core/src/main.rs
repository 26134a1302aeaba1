fn main() {
    std::process::exit(dhpp::cli::run(std::env::args_os()));
}
