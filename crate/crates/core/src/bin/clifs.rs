fn main() {
    std::process::exit(clifs::cli::main());
}
