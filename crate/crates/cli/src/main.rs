use clap::Parser;

fn main() {
    let args = nfloc_cli::Args::parse();
    std::process::exit(nfloc_cli::run(&args));
}
