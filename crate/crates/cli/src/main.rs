fn main() {
    std::process::exit(deploysim_cli::main_with_args(std::env::args_os()));
}
