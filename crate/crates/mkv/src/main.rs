fn main() {
    std::process::exit(mkv::cli::run(std::env::args_os()));
}
