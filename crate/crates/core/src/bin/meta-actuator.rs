fn main() {
    std::process::exit(meta_actuator::cli::run(std::env::args_os()));
}
