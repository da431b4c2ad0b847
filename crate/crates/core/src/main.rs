fn main() {
    std::process::exit(byzant::io::cli(std::env::args_os()));
}
