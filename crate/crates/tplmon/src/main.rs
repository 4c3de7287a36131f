fn main() {
    std::process::exit(tplmon::run());
}
