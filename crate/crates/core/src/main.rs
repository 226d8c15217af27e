fn main() {
    std::process::exit(dpcp::cli::run(std::env::args_os()));
}
