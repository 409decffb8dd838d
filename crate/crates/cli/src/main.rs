fn main() {
    std::process::exit(nhsvm_cli::run(std::env::args_os()));
}
