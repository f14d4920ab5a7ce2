fn main() {
    std::process::exit(crackseg::cli::run(std::env::args_os()));
}
