fn main() {
    std::process::exit(mltet::cli::run(std::env::args_os()));
}
