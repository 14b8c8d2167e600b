//! HTTP review service.
//!
//! Routes live under `/api/v1` and need `Authorization: Bearer <token>`,
//! except `/api/v1/health`. Retraining runs on a background thread and swaps
//! the serving model by replacing one `Arc`.

pub mod config;
pub mod error;
pub mod http_scorer;
pub mod registry;
pub mod routes;
pub mod state;

use std::sync::Arc;

pub use config::{ConfigError, ScorerBackendConfig, ServiceConfig};
pub use error::ApiError;
pub use http_scorer::HttpScorer;
pub use registry::{ModelKind, ModelRegistryEntry};
pub use routes::router;
pub use state::{AppState, RetrainStart, RetrainStatus, StartupError};

/// JSON log lines on stderr. `RUST_LOG` overrides the default `info` level.
pub fn init_tracing() {
    use tracing_subscriber::EnvFilter;
    let _ = tracing_subscriber::fmt()
        .json()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .try_init();
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Startup(#[from] StartupError),
    #[error("listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Opens the state, binds the configured address and serves until ctrl-c.
pub async fn serve(config: ServiceConfig) -> Result<(), ServeError> {
    let addr = config.listen.clone();
    let state = tokio::task::spawn_blocking(move || AppState::open(config))
        .await
        .map_err(|e| ServeError::Io(std::io::Error::other(e)))??;
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|source| ServeError::Bind { addr: addr.clone(), source })?;
    tracing::info!(event = "listening", addr = %listener.local_addr()?);
    serve_on(state, listener).await
}

pub async fn serve_on(state: Arc<AppState>, listener: tokio::net::TcpListener) -> Result<(), ServeError> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
