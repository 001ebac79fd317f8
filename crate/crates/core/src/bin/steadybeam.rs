fn main() {
    std::process::exit(steadybeam::cli::cli_main(std::env::args_os()));
}
