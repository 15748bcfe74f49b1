fn main() {
    std::process::exit(isoc_core::cli::run(std::env::args_os()));
}
