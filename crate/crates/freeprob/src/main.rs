fn main() {
    std::process::exit(freeprob::cli::run());
}
