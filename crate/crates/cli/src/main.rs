fn main() {
    std::process::exit(ppknn_cli::run(std::env::args_os()));
}
