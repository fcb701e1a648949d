fn main() {
    std::process::exit(raremine_service::cli::main());
}
