fn main() {
    std::process::exit(traffic_adp::cli::main_with(std::env::args_os()));
}
