fn main() {
    std::process::exit(ddm_cli::run(std::env::args_os()));
}
