fn main() {
    std::process::exit(crstd::cli::main_with_args(std::env::args_os()));
}
