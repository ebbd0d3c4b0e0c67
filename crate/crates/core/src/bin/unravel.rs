fn main() {
    std::process::exit(unravel::cli::main_with_args(std::env::args_os()));
}
