fn main() {
    std::process::exit(prmiso_cli::cli_main(std::env::args_os()));
}
