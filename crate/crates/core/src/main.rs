fn main() {
    std::process::exit(avprob::cli::run(std::env::args_os()));
}
