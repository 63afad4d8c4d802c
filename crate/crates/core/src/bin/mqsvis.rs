fn main() {
    std::process::exit(mqsvis::cli::main_entry());
}
