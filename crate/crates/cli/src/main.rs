fn main() {
    std::process::exit(stagerl_cli::run(std::env::args_os()));
}
