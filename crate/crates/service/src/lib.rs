//! HTTP API over the screening pipeline.
//!
//! All endpoints live under `/api/v1`; `openapi.json` in this crate
//! describes them and is also served at `/api/v1/openapi.json`.

pub mod api;
pub mod config;
pub mod error;
pub mod layout;
pub mod state;

use std::sync::Arc;

use axum::Router;
use rptte_core::{Dataset, Error, Result};
use tower_http::services::ServeDir;

pub use api::{router, OPENAPI_JSON};
pub use config::ServiceConfig;
pub use error::{ApiError, ErrorBody};
pub use state::{AppState, RunHandle, RunStatus};

/// Router with the API and, if configured, the UI bundle at `/`.
pub fn app(state: Arc<AppState>) -> Router {
    let static_dir = state.config.static_dir.clone();
    let api = router(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Loads the configured dataset and serves until interrupted.
pub async fn serve(config: ServiceConfig) -> Result<()> {
    let (dataset, report) = Dataset::load_dir(&config.dataset_dir)?;
    if !report.rejections.is_empty() {
        tracing::warn!(
            rejected = report.rejections.len(),
            "rows rejected while loading {}",
            config.dataset_dir.display()
        );
    }
    let listen = config.listen.clone();
    let state = Arc::new(AppState::new(dataset, config));
    let listener = tokio::net::TcpListener::bind(&listen)
        .await
        .map_err(|source| Error::Io {
            path: listen.clone().into(),
            source,
        })?;
    tracing::info!("listening on {listen}");
    axum::serve(listener, app(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|source| Error::Io {
            path: listen.into(),
            source,
        })
}
