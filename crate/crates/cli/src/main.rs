use clap::Parser;

fn main() {
    let cli = patternlab_cli::Cli::parse();
    if let Err(e) = patternlab_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
