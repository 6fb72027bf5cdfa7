fn main() {
    std::process::exit(sketchguard::cli::run(std::env::args_os()));
}
