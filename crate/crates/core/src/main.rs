fn main() {
    std::process::exit(laficmil::cli::run(std::env::args_os()));
}
