fn main() {
    std::process::exit(editsim::cli::main_with_args(std::env::args_os()));
}
