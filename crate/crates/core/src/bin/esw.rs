fn main() {
    std::process::exit(esw::cli::run(std::env::args_os()));
}
