fn main() {
    std::process::exit(tricycle_core::cli::run_from(std::env::args_os()));
}
