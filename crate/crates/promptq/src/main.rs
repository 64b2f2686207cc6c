fn main() {
    std::process::exit(promptq::cli::run(std::env::args_os()));
}
