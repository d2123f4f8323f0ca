fn main() {
    std::process::exit(gadgetlab::cli::run_main());
}
