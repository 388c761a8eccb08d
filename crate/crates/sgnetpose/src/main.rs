fn main() {
    env_logger::init();
    if let Err(e) = sgnetpose::cli::run() {
        eprintln!("{}", e);
        std::process::exit(i32::from(e.exit_code()));
    }
}
