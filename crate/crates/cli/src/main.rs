use clap::Parser;

fn main() {
    let cli = xmap_cli::Cli::parse();
    if let Err(e) = xmap_cli::run(cli) {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
