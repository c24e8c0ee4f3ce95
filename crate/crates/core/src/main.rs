fn main() {
    std::process::exit(ccnet::cli::main_with_args(std::env::args_os()));
}
