fn main() {
    std::process::exit(optotherm::cli::run(std::env::args_os()));
}
