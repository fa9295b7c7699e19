fn main() {
    if let Err(e) = hdcnn::cli::run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
