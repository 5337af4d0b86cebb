fn main() {
    std::process::exit(rfmr_core::cli::main_with_args(std::env::args_os()));
}
