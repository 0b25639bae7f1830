fn main() {
    std::process::exit(oob_bands_cli::cli_main(std::env::args_os()));
}
