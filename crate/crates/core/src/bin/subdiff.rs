fn main() {
    std::process::exit(subdiff::cli::main());
}
