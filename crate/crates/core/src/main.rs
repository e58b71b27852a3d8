fn main() {
    std::process::exit(cq_soliton::cli::run(std::env::args_os()));
}
