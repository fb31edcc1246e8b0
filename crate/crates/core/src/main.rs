fn main() {
    std::process::exit(nplink::cli::main_with_exit_code());
}
