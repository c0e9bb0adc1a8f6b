fn main() {
    std::process::exit(barma_cli::run(std::env::args_os()));
}
