fn main() {
    std::process::exit(protorel::cli::main_with(std::env::args_os()));
}
