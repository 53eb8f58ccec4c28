fn main() {
    std::process::exit(vortex2d::cli::run_main());
}
