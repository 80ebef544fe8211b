fn main() {
    std::process::exit(quake_cli::run(std::env::args_os()));
}
