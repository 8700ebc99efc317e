fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(speed_cli::cli_main(&argv));
}
