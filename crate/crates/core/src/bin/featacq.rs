fn main() {
    std::process::exit(featacq::cli::cli_main(std::env::args_os()));
}
