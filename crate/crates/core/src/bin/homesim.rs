//! `homesim serve` exposes the device API over HTTP for interactive use.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use tower_http::cors::CorsLayer;

use faasforge::config::load_state;
use faasforge::sim::{router, DeviceState, HomeSimulator};

#[derive(Parser)]
#[command(name = "homesim", version, about = "Smart-home device simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    Serve {
        /// Initial device state (JSON); the built-in home when omitted.
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8700", env = "FORGE_HOME_LISTEN")]
        listen: SocketAddr,
    },
    /// Print the built-in device state.
    DefaultState,
}

async fn serve(state: Option<PathBuf>, listen: SocketAddr) -> anyhow::Result<()> {
    let initial = match state {
        Some(p) => load_state(&p)?,
        None => DeviceState::default_home(),
    };
    let sim = Arc::new(HomeSimulator::new(initial)?);
    let listener = tokio::net::TcpListener::bind(listen).await.with_context(|| format!("binding {listen}"))?;
    eprintln!("device API on http://{}", listener.local_addr()?);
    axum::serve(listener, router(sim).layer(CorsLayer::permissive()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Serve { state, listen } => serve(state, listen).await,
        Command::DefaultState => {
            println!("{}", serde_json::to_string_pretty(&DeviceState::default_home()).unwrap_or_default());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
