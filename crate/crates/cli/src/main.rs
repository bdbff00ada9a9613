fn main() {
    std::process::exit(gazebench_cli::commands::run(std::env::args_os()));
}
