fn main() {
    std::process::exit(nlml::cli::main());
}
