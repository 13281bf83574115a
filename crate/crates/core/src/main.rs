fn main() {
    std::process::exit(stationcast::cli::run());
}
