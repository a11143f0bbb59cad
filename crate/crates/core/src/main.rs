fn main() {
    std::process::exit(epsense::cli::main());
}
