fn main() {
    std::process::exit(shapetex::cli::run(std::env::args_os()));
}
