fn main() {
    std::process::exit(contpop::cli::run(std::env::args_os()));
}
