fn main() {
    std::process::exit(immuno_core::cli::main_from(std::env::args_os()));
}
