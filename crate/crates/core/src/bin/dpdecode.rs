fn main() {
    std::process::exit(dp_decode::cli::main_with_args(std::env::args_os()));
}
