fn main() {
    std::process::exit(ampest::cli::run(std::env::args_os()));
}
