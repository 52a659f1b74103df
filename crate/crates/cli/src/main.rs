fn main() {
    std::process::exit(haze_cli::main_with(std::env::args_os()));
}
