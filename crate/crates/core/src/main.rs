fn main() {
    std::process::exit(epwa::cli::run(std::env::args_os()));
}
