use clap::Parser;
use tracing_subscriber::EnvFilter;
use uibench_cli::cli::{execute, Cli};

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    if let Err(e) = execute(cli).await {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
