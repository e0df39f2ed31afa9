fn main() {
    std::process::exit(star_rz::bench_cli::main_with_args(std::env::args_os()));
}
