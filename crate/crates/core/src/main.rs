fn main() {
    std::process::exit(sshh::cli::main_with_args(std::env::args_os()));
}
