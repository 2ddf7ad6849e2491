fn main() {
    std::process::exit(specmult::cli::run(std::env::args_os()));
}
