fn main() {
    std::process::exit(polycone::cli::main_with_args(std::env::args_os()));
}
