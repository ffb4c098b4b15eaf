fn main() {
    std::process::exit(qparctl::run_command(std::env::args_os()));
}
