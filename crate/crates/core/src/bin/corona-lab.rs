fn main() {
    std::process::exit(corona_lab::cli::run(std::env::args_os()));
}
