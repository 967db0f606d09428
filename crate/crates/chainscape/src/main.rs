fn main() {
    std::process::exit(chainscape::cli::run());
}
