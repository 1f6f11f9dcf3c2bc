fn main() {
    std::process::exit(dtrlab::cli::main_with_args(std::env::args_os()));
}
