use std::net::SocketAddr;

use clap::Parser;
use patchmatch_service::{router, Config, DEFAULT_PORT};

/// Preview-resolution editing service.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    #[arg(long, default_value_t = DEFAULT_PORT)]
    port: u16,
    /// Address to bind.
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Longest side of stored previews, in pixels.
    #[arg(long, default_value_t = Config::default().preview_max_dim)]
    preview_max_dim: usize,
    /// Jobs running at once across all sessions.
    #[arg(long, default_value_t = Config::default().workers)]
    workers: usize,
    /// Origin allowed by CORS; any origin when unset.
    #[arg(long)]
    origin: Option<String>,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let args = Args::parse();
    let config = Config {
        preview_max_dim: args.preview_max_dim,
        workers: args.workers,
        origin: args.origin,
        ..Config::default()
    };
    let addr = SocketAddr::new(args.host, args.port);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(config)).await
}
