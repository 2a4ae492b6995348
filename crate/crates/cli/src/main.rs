fn main() {
    std::process::exit(stme_cli::main_with_args(std::env::args_os()));
}
