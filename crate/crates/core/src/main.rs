fn main() {
    std::process::exit(plancost::cli::run(std::env::args_os()));
}
