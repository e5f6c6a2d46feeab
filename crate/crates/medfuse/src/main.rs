use clap::Parser;

fn main() {
    let cli = medfuse::cli::Cli::parse();
    if let Err(e) = medfuse::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
