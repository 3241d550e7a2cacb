fn main() {
    std::process::exit(uwac::cli::main_with_args(std::env::args_os()));
}
