fn main() {
    std::process::exit(mega_cli::run(std::env::args_os()));
}
