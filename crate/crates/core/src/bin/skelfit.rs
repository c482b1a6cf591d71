fn main() {
    std::process::exit(skelfit::cli::run(std::env::args_os()));
}
