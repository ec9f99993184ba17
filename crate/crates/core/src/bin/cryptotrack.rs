fn main() {
    std::process::exit(cryptotrack::cli::run(std::env::args_os()));
}
