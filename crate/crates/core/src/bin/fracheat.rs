fn main() {
    std::process::exit(fracheat::cli::main_with_args(std::env::args_os()));
}
