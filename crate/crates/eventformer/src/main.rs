fn main() {
    std::process::exit(eventformer::cli::run());
}
