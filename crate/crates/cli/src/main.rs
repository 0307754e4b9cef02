fn main() {
    std::process::exit(sgbench::run(std::env::args_os()));
}
