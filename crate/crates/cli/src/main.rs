fn main() {
    brushwork_cli::init_logging();
    std::process::exit(brushwork_cli::run(std::env::args_os()));
}
