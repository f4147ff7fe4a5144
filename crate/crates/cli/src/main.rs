fn main() {
    std::process::exit(affmt_cli::run_cli(std::env::args_os()));
}
