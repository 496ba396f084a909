fn main() {
    std::process::exit(dpmmdp::cli::run(std::env::args_os()));
}
