fn main() {
    std::process::exit(tsne_rs::cli::main_entry());
}
