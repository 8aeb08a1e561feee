fn main() {
    std::process::exit(isddp::cli::main_with_args(std::env::args_os()));
}
