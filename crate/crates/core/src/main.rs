fn main() {
    std::process::exit(abcmeta::cli::run_from_args(std::env::args_os()));
}
