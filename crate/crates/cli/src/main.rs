use clap::Parser;

fn main() {
    let cli = contrast_bnb_cli::Cli::parse();
    if let Err(e) = contrast_bnb_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
