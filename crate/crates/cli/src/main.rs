use clap::Parser;
use costroute::cli::Cli;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = costroute::commands::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
