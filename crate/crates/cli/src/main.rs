use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use dosecomb_cli::api::{serve, AppState};
use dosecomb_cli::cli::{run, Cli, Command};
use dosecomb_cli::error::ApiError;
use dosecomb_cli::store::Store;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Serve { bind, data_dir, token } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .init();
            let store = match Store::open(&data_dir) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
            match runtime.block_on(serve(AppState::new(store, token), &bind)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        command => match run(command) {
            Ok(out) => {
                let text = if cli.json {
                    serde_json::to_string_pretty(&out.json).expect("serializable")
                } else {
                    out.text
                };
                // A closed pipe (e.g. `| head`) is not an error.
                let _ = writeln!(std::io::stdout().lock(), "{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                match &e {
                    ApiError::Validation { field: Some(f), .. } => eprintln!("error: {f}: {e}"),
                    _ => eprintln!("error: {e}"),
                }
                // Bad arguments are usage errors, like clap's own.
                ExitCode::from(if matches!(e, ApiError::Validation { .. }) { 2 } else { 1 })
            }
        },
    }
}
