fn main() {
    std::process::exit(tcfgo::cli::main_with_args(std::env::args_os()));
}
