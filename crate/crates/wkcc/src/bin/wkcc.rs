fn main() {
    std::process::exit(wkcc::cli::main_with_args(std::env::args_os()));
}
