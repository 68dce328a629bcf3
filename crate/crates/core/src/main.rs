fn main() {
    std::process::exit(charcd::cli::run(std::env::args_os()));
}
