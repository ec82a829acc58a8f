//! HTTP front end for the sketch-to-painting pipeline.
//!
//! Endpoints live under `/api/v1`; bodies are JSON and images travel as
//! base64 PPM/PGM or PNG. The model registry is loaded once and shared
//! read-only by every request.

pub mod api;
pub mod registry;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;
use log::info;

pub use registry::{write_entry, ModelEntry, Registry, RegistryError, Template};

/// Largest accepted request body.
pub const MAX_BODY_BYTES: usize = 64 << 20;

/// Environment fallback for the registry directory.
pub const REGISTRY_ENV: &str = "NP_REGISTRY_DIR";

#[derive(Clone, Debug)]
pub struct AppState {
    pub registry: Arc<Registry>,
}

pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/api/v1/models", get(api::list_models))
        .route("/api/v1/models/{id}/templates", get(api::list_templates))
        .route("/api/v1/generate", post(api::generate))
        .route("/api/v1/shuffle", post(api::shuffle))
        .route("/api/v1/bank/build", post(api::build_bank_endpoint))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(AppState { registry })
}

#[derive(Clone, Debug)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub registry_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Load the registry, bind and serve until the process ends.
pub async fn serve(cfg: ServeConfig) -> Result<(), ServeError> {
    let registry = Arc::new(Registry::load(&cfg.registry_dir)?);
    let listener = tokio::net::TcpListener::bind(cfg.addr)
        .await
        .map_err(|source| ServeError::Bind { addr: cfg.addr, source })?;
    info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(registry)).await?;
    Ok(())
}
