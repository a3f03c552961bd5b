fn main() {
    std::process::exit(rankthresh::cli::run_from_args(std::env::args_os()));
}
