fn main() {
    std::process::exit(scos::cli::run(std::env::args_os()));
}
