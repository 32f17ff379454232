fn main() {
    std::process::exit(drape::cli::run(std::env::args_os()));
}
