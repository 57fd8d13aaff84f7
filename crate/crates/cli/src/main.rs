fn main() {
    std::process::exit(nst_cli::cli_dispatch(std::env::args_os()));
}
