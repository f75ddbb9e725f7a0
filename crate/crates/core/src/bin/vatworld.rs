fn main() {
    std::process::exit(vatworld::cli::run());
}
