fn main() {
    std::process::exit(ucc_cli::execute(std::env::args()));
}
