fn main() {
    std::process::exit(seesaw_cli::run_cli(std::env::args_os()));
}
