fn main() {
    std::process::exit(repeat_core::harness::main_with_args(std::env::args_os()));
}
