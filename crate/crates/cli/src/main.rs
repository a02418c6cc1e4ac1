fn main() {
    std::process::exit(partial_ner_cli::run(std::env::args_os()));
}
