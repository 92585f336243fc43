fn main() {
    std::process::exit(predifix::cli::main_with_args(std::env::args_os()));
}
