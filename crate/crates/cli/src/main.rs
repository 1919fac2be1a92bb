fn main() {
    std::process::exit(polarwarp_cli::run(std::env::args_os()));
}
