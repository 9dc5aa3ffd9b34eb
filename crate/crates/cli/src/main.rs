fn main() {
    std::process::exit(andreev_bs::run(std::env::args_os()));
}
