fn main() {
    std::process::exit(virodyne_cli::run(std::env::args_os()));
}
