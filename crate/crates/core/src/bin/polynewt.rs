fn main() {
    std::process::exit(polynewt::cli::run(std::env::args_os()));
}
