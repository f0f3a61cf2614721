fn main() {
    std::process::exit(fhn::harness::cli::main_with_env());
}
