fn main() {
    std::process::exit(attn_opt::cli::run(std::env::args_os()));
}
