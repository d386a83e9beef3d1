fn main() {
    std::process::exit(survcausal_cli::main_with_args(std::env::args_os()));
}
