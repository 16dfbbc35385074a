use clap::Parser;

use screenllm_cli::{render_error, run, Cli};

fn main() {
    let cli = Cli::parse();
    if matches!(cli.command, screenllm_cli::Command::Serve(_)) {
        tracing_subscriber::fmt()
            .with_env_filter(
                tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
            )
            .init();
    }
    let json_errors = cli.json_errors;
    if let Err(err) = run(cli) {
        eprintln!("{}", render_error(&err, json_errors));
        std::process::exit(err.exit_code());
    }
}
