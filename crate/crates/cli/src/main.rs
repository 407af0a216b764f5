use clap::Parser;

fn main() {
    let args = cyclical_cli::Args::parse();
    std::process::exit(cyclical_cli::run_cli(&args));
}
