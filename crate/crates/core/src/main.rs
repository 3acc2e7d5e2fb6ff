fn main() {
    std::process::exit(siamflow::cli::main_with_args(std::env::args_os()));
}
