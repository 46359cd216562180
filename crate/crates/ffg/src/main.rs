fn main() {
    std::process::exit(ffg::cli::run());
}
