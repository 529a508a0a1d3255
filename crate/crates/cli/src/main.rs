fn main() {
    std::process::exit(fedround_cli::cli::main_with(std::env::args_os().collect()));
}
