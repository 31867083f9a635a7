fn main() {
    std::process::exit(csi2video::cli::main_with_args(std::env::args_os()));
}
