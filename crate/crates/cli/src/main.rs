fn main() {
    std::process::exit(qsd_cli::run(std::env::args_os()));
}
