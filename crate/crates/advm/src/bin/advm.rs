fn main() {
    let code = advm::cli::run_cli(std::env::args(), |key| std::env::var(key).ok());
    std::process::exit(code);
}
