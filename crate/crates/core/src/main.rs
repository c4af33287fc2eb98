fn main() {
    std::process::exit(drgame::cli::run(std::env::args_os()));
}
