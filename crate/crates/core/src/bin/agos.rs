fn main() {
    std::process::exit(agos::cli::run(std::env::args_os()));
}
