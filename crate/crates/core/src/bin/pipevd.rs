fn main() {
    std::process::exit(pipevd::cli::main_with_args(std::env::args_os()));
}
