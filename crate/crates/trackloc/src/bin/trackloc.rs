fn main() {
    std::process::exit(trackloc::cli::run());
}
