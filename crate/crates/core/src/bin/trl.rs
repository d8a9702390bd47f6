use clap::Parser;

fn main() {
    std::process::exit(trl::cli::run(trl::cli::Cli::parse()));
}
