use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use clap::Parser;
use dubedit::adapters::remote::{RemoteAdapter, RemoteConfig};
use dubedit::adapters::AdapterRegistry;
use dubedit_server::{serve, AppState, ServerConfig};

/// Job service and adapter endpoint for the dubbing editor.
#[derive(Parser)]
#[command(name = "dubedit-server", version)]
struct Args {
    /// Directory holding media, jobs, projects and sessions.
    #[arg(long, default_value = "dubedit-data")]
    root: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    #[arg(long, default_value_t = 2)]
    workers: usize,
    /// Forward every capability to another adapter server.
    #[arg(long, value_name = "URL")]
    remote: Option<String>,
}

#[tokio::main]
async fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let mut registry = AdapterRegistry::with_stubs();
    if let Some(url) = &args.remote {
        for adapter in RemoteAdapter::all(&RemoteConfig::new(url.clone()))? {
            registry.register_selected(adapter);
        }
    }
    let config = ServerConfig { root: args.root, workers: args.workers, registry };
    let state = tokio::task::spawn_blocking(move || AppState::open(config)).await?.map_err(|e| anyhow!("{e}"))?;
    let listener = tokio::net::TcpListener::bind(args.listen).await.with_context(|| format!("cannot bind {}", args.listen))?;
    log::info!("listening on {}", listener.local_addr()?);
    serve(listener, state).await?;
    Ok(())
}
