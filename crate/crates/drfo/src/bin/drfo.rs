fn main() {
    std::process::exit(drfo::cli::run());
}
