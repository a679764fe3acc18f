fn main() {
    std::process::exit(slicegcn_cli::run(std::env::args_os()));
}
