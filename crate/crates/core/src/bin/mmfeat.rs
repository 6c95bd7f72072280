fn main() {
    std::process::exit(mmfeat::cli::dispatch(std::env::args_os()));
}
