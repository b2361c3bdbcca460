fn main() {
    std::process::exit(contrakit::cli::main());
}
