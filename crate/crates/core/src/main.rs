fn main() {
    std::process::exit(bvam::cli::run(std::env::args_os()));
}
