fn main() {
    std::process::exit(gsbench::cli::main_with_args(std::env::args_os().skip(1)));
}
