fn main() {
    std::process::exit(qtkw::cli::run(std::env::args_os()));
}
