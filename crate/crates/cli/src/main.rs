use clap::Parser;

fn main() {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let cli = rptte_cli::Cli::parse();
    if let Err(e) = rptte_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
