fn main() {
    std::process::exit(degenctrl::cli::main_with_args(std::env::args_os()));
}
