fn main() {
    std::process::exit(rocerf::cli::run(std::env::args()));
}
