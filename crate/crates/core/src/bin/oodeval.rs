fn main() {
    std::process::exit(oodeval::cli::main(std::env::args_os()));
}
