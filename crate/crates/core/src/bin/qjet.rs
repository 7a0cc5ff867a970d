fn main() {
    std::process::exit(qjet::cli::main_with_args(std::env::args_os()));
}
