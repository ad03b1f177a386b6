//! HTTP service for the ear-deformity triage agent.
//!
//! Endpoints:
//!
//! - `POST /v1/chat`, multipart with optional `text`, `image`, `session_id`
//!   and `lang` fields;
//! - `POST /v1/admin/ingest`, bearer-token protected, JSON `{doc_id, text}`
//!   or multipart `doc_id` + `file`;
//! - `GET /v1/health`.

pub mod app;
pub mod config;
pub mod error;
pub mod session;
pub mod startup;

pub use app::{health_report, router, AppState, ChatReply, Health, HealthStatus, Limits, Reachability};
pub use config::{ConfigError, ServiceConfig};
pub use error::ApiError;
pub use session::SessionStore;
pub use startup::{build_agent, StartupError};

/// Serves `state` on `listener` until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    let addr = listener.local_addr()?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await
}
