fn main() {
    std::process::exit(waveband::cli::run());
}
