fn main() {
    std::process::exit(air::cli::main());
}
