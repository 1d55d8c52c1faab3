//! `forge build` turns one description into a deployed function;
//! `forge serve` runs the platform gateway, the build service and the
//! device API behind one listener.

use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde_json::json;
use tower_http::cors::CorsLayer;

use faasforge::bridge::service::BuildService;
use faasforge::bridge::{Bridge, UserDescription};
use faasforge::config::ForgeConfig;
use faasforge::platform::{gateway, Platform};
use faasforge::server::ephemeral;
use faasforge::sim::{self, HomeSimulator};

#[derive(Parser)]
#[command(name = "forge", version, about = "Build and serve functions from natural-language descriptions")]
struct Cli {
    /// TOML config file.
    #[arg(long, global = true, env = "FORGE_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, package and deploy one function, then print the result.
    Build {
        /// Description file, or `-` for stdin.
        #[arg(long)]
        desc: String,
        #[arg(long, default_value = "python3")]
        runtime: String,
        #[arg(long)]
        task_id: Option<String>,
        /// Stop after extraction and print the artifact.
        #[arg(long)]
        dry_run: bool,
        /// Keep serving the function until interrupted.
        #[arg(long)]
        keep: bool,
    },
    /// Serve the management API, triggers, `/build` and the device API at `/home`.
    Serve {
        /// Overrides `platform.listen`.
        #[arg(long)]
        listen: Option<String>,
    },
}

fn read_description(arg: &str) -> anyhow::Result<String> {
    if arg == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        std::fs::read_to_string(arg).with_context(|| format!("reading description {arg}"))
    }
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).unwrap_or_default());
}

async fn build(config: ForgeConfig, desc: String, runtime: String, task_id: Option<String>, dry_run: bool, keep: bool) -> anyhow::Result<bool> {
    let text = read_description(&desc)?;
    let mut description = UserDescription::new(text.trim(), runtime);
    description.task_id = task_id;
    let provider = config.provider.build()?;
    let platform = Platform::new(config.platform.clone())?;
    let mut options = config.bridge_options();

    let sim = Arc::new(HomeSimulator::new(config.home.initial_state()?)?);
    let home_addr = if keep { config.home_addr()? } else { ephemeral() };
    let home = sim::SimServer::start(sim, home_addr).await.context("starting device API")?;
    options.package.home_api_url = home.base_url();

    let mut bridge = Bridge::new(provider, config.provider.llm_config(), platform.clone(), options);
    bridge.prompts = config.prompts()?;

    if dry_run {
        return match bridge.dry_run(&description).await {
            Ok((prompt, artifact, breakdown)) => {
                let ok = artifact.failure.is_none();
                print_json(&json!({ "prompt": prompt, "artifact": artifact, "breakdown": breakdown }));
                Ok(ok)
            }
            Err(e) => {
                print_json(&json!({ "error": e.kind, "failure": e.failure, "breakdown": e.breakdown }));
                Ok(false)
            }
        };
    }

    let ok = match bridge.build_and_deploy(&description).await {
        Ok(outcome) => {
            print_json(&json!({ "record": outcome.record, "artifact": outcome.artifact.summary(), "breakdown": outcome.breakdown }));
            if keep {
                let gw = gateway::GatewayServer::start(platform.clone(), config.listen_addr()?).await?;
                eprintln!("serving {} (device API {}), ctrl-c to stop", gw.function_url(outcome.record.name()), home.base_url());
                tokio::signal::ctrl_c().await?;
            }
            true
        }
        Err(e) => {
            print_json(&json!({
                "error": e.kind,
                "failure": e.failure,
                "record": e.record,
                "artifact": e.artifact.as_ref().map(|a| a.summary()),
                "breakdown": e.breakdown,
            }));
            false
        }
    };
    platform.shutdown().await;
    Ok(ok)
}

async fn serve(config: ForgeConfig, listen: Option<String>) -> anyhow::Result<()> {
    let addr: std::net::SocketAddr = match listen {
        Some(l) => l.parse().with_context(|| format!("--listen {l:?}"))?,
        None => config.listen_addr()?,
    };
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    let addr = listener.local_addr()?;

    let platform = Platform::new(config.platform.clone())?;
    let sim = Arc::new(HomeSimulator::new(config.home.initial_state()?)?);
    let mut options = config.bridge_options();
    options.package.home_api_url = format!("http://{addr}/home");
    let mut bridge = Bridge::new(config.provider.build()?, config.provider.llm_config(), platform.clone(), options);
    bridge.prompts = config.prompts()?;
    let service = BuildService::new(Arc::new(bridge));

    let app = gateway::router(platform.clone())
        .merge(service.router())
        .nest("/home", sim::router(sim))
        .layer(CorsLayer::permissive());
    eprintln!("listening on http://{addr}");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    platform.shutdown().await;
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = async {
        let config = ForgeConfig::load(cli.config.as_deref())?;
        match cli.command {
            Command::Build { desc, runtime, task_id, dry_run, keep } => build(config, desc, runtime, task_id, dry_run, keep).await,
            Command::Serve { listen } => serve(config, listen).await.map(|_| true),
        }
    }
    .await;
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
