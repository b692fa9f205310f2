fn main() {
    std::process::exit(miso_sparse::cli::main_with_args(std::env::args_os()));
}
