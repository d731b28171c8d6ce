fn main() {
    std::process::exit(ise_core::pipeline::cli_main(std::env::args_os()));
}
