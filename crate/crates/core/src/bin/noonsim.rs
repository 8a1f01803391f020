fn main() {
    std::process::exit(noonsim::cli::main_with_args(std::env::args_os()));
}
