fn main() {
    std::process::exit(localstar::cli::main());
}
