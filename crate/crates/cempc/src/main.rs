use clap::Parser;

fn main() {
    let cli = cempc::cli::Cli::parse();
    if let Err(e) = cempc::cli::execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
