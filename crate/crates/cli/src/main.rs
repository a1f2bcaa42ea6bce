use clap::Parser;

fn main() {
    let cli = hat_cli::Cli::parse();
    if let Err(e) = hat_cli::execute(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
