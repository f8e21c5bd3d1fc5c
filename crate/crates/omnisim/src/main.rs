fn main() {
    std::process::exit(omnisim::cli::run());
}
