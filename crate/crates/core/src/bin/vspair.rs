fn main() {
    std::process::exit(vspair::cli::run(std::env::args_os()));
}
