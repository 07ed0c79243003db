fn main() {
    std::process::exit(mmtrack::harness::run_cli(std::env::args_os()));
}
