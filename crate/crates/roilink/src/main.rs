fn main() {
    std::process::exit(roilink::cli::main_with_args(std::env::args_os()));
}
