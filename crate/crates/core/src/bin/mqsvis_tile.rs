fn main() {
    std::process::exit(mqsvis::cli::run_shim("tile"));
}
