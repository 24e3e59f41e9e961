fn main() {
    std::process::exit(rollshare::cli::main_with(std::env::args_os()));
}
