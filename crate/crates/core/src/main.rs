fn main() {
    std::process::exit(semnav::cli::run_with(std::env::args_os()));
}
