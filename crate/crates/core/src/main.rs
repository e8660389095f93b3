fn main() {
    std::process::exit(finclear::cli::run_cli(std::env::args_os()));
}
