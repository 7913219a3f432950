fn main() {
    std::process::exit(rwre_core::cli::main_with_args(std::env::args_os()));
}
