fn main() {
    std::process::exit(propspan_cli::run(std::env::args_os()));
}
