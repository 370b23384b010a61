use clap::Parser;

fn main() {
    let cli = dgmp::cli::Cli::parse();
    if let Err(e) = dgmp::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
