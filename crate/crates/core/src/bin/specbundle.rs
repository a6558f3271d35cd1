fn main() {
    std::process::exit(specbundle::bench::cli::cli_main(std::env::args_os()));
}
