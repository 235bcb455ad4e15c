fn main() {
    std::process::exit(ktrap::experiment::main_with_args(std::env::args_os()));
}
