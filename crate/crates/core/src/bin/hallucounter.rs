fn main() {
    std::process::exit(hallucounter::cli::run(std::env::args_os()));
}
