fn main() {
    if let Err(e) = camseg::cli::run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
