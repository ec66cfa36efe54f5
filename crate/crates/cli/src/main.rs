fn main() {
    std::process::exit(radalt_cli::main_with_args(std::env::args_os()));
}
