fn main() {
    std::process::exit(fes_cli::run(std::env::args_os()));
}
