fn main() {
    std::process::exit(rarc_cli::main_impl(std::env::args_os()));
}
