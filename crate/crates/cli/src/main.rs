fn main() {
    std::process::exit(levyfilter_cli::run(std::env::args_os()));
}
