use std::process::ExitCode;

use clap::Parser;
use tracing_subscriber::EnvFilter;
use visaug_cli::commands::{run, Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = EnvFilter::try_from_env("VISAUG_LOG").unwrap_or_else(|_| EnvFilter::new("info"));
    let builder = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr);
    if matches!(cli.command, Command::Serve(_)) {
        builder.json().init();
    } else {
        builder.with_target(false).init();
    }
    run(cli)
}
