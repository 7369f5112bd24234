fn main() {
    std::process::exit(cbranch::cli::run(std::env::args_os()));
}
