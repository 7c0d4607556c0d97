fn main() {
    std::process::exit(subgraph_gcl::cli::run(std::env::args_os()));
}
