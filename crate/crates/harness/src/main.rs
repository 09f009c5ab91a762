fn main() {
    std::process::exit(suot_harness::cli::run(std::env::args_os()));
}
