use clap::Parser;

fn main() {
    let cli = socialkey::cli::Cli::parse();
    if let Err(e) = socialkey::cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
