fn main() {
    std::process::exit(srwalk_cli::run(std::env::args_os()));
}
