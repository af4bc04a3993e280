fn main() {
    std::process::exit(casm::cli::run_from_args(std::env::args_os()));
}
