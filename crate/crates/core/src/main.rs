fn main() {
    std::process::exit(hwsw_codesign::cli::run(std::env::args_os()));
}
