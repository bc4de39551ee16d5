fn main() {
    std::process::exit(idepcag::cli::main());
}
