use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Parser;
use xmap_server::{router, AppState, ServerConfig};

/// Serves the xmap HTTP API.
#[derive(Debug, Parser)]
#[command(name = "xmap-server", version)]
struct Args {
    #[arg(long, env = "XMAP_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Directory for session files; sessions stay in memory when unset.
    #[arg(long, env = "XMAP_DATA_DIR")]
    data_dir: Option<PathBuf>,
    #[arg(long, env = "XMAP_MAX_FITS", default_value_t = 2)]
    max_fits: usize,
    /// Seed for fits that do not name one.
    #[arg(long, env = "XMAP_DEFAULT_SEED")]
    default_seed: Option<u64>,
    #[arg(long, env = "XMAP_MAX_BODY_MB", default_value_t = 256)]
    max_body_mb: usize,
}

#[tokio::main]
async fn main() {
    let args = Args::parse();
    if let Some(dir) = &args.data_dir {
        if let Err(e) = std::fs::create_dir_all(dir) {
            eprintln!("cannot create {}: {e}", dir.display());
            std::process::exit(2);
        }
    }
    let defaults = ServerConfig::default();
    let config = ServerConfig {
        data_dir: args.data_dir,
        max_concurrent_fits: args.max_fits,
        default_seed: args.default_seed.unwrap_or(defaults.default_seed),
        max_body_bytes: args.max_body_mb << 20,
    };
    let app = router(AppState::new(config));
    let listener = match tokio::net::TcpListener::bind(args.listen).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("cannot listen on {}: {e}", args.listen);
            std::process::exit(2);
        }
    };
    eprintln!("listening on {}", args.listen);
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
        eprintln!("server error: {e}");
        std::process::exit(1);
    }
}
