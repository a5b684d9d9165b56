fn main() {
    std::process::exit(ogsnet::cli::run(std::env::args_os()));
}
