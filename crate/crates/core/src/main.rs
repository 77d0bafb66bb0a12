fn main() {
    std::process::exit(riskratio::cli::run(std::env::args_os()));
}
