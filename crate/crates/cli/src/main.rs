fn main() {
    std::process::exit(mixclust_cli::main_with(std::env::args_os()));
}
