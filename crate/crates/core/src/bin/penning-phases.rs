fn main() {
    std::process::exit(penning_phases::cli::main_with_args(std::env::args_os()));
}
