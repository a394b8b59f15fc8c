fn main() {
    std::process::exit(exittime_cli::run(std::env::args_os()));
}
