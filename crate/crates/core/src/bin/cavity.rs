fn main() {
    std::process::exit(cavity_core::cli::main_with(std::env::args_os()));
}
