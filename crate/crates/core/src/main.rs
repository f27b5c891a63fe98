fn main() {
    std::process::exit(hyp1d::cli::run(std::env::args_os()));
}
