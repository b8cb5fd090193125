fn main() {
    std::process::exit(codedlb::cli::main_with_args(std::env::args_os()));
}
