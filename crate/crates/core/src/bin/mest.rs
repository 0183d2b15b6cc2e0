fn main() {
    std::process::exit(mest::cli::run(std::env::args_os()));
}
