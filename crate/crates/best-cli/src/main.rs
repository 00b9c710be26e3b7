fn main() {
    std::process::exit(best_cli::cli(std::env::args_os()));
}
