fn main() {
    std::process::exit(gnncca_cli::run_cli(std::env::args_os()));
}
