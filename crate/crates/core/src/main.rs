fn main() {
    std::process::exit(ggbm::cli::main_with(std::env::args_os()));
}
