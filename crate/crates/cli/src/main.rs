fn main() {
    std::process::exit(dhlab_cli::run(std::env::args_os()));
}
