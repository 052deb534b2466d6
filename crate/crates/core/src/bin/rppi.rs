fn main() {
    std::process::exit(rppi::cli::main());
}
