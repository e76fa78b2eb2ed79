fn main() {
    std::process::exit(ucfalloc_cli::cli_dispatch(std::env::args_os()));
}
