fn main() {
    std::process::exit(otopipe::cli::run(std::env::args_os()));
}
