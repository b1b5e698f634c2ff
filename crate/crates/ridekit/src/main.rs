fn main() {
    std::process::exit(ridekit::cli::run(std::env::args_os()));
}
