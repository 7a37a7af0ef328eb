fn main() {
    std::process::exit(savae::cli::dispatch(std::env::args_os()));
}
