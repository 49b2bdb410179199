fn main() {
    std::process::exit(kernelflow_runner::cli::main_with_args(std::env::args_os()));
}
