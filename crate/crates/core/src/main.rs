fn main() {
    std::process::exit(berryforce::cli::main_with(std::env::args_os()));
}
