use clap::Parser;

fn main() {
    let cli = ratelab::cli::Cli::parse();
    if let Err(e) = ratelab::cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
