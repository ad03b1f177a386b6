#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use eartriage_core::diagnosis::{DetectionBackend, MockDetector};
use eartriage_core::knowledge::{corpus, build_index, ChunkConfig, Embedder, HashNgramEmbedder, VectorIndex};
use eartriage_core::llm::LlmGateway;
use eartriage_core::locale::Locale;
use eartriage_core::router::GateConfig;
use eartriage_core::{Agent, AgentConfig};
use eartriage_service::{router, AppState, Limits, SessionStore};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub const BOUNDARY: &str = "----eartriage-test-boundary";
pub const TOKEN: &str = "admin-secret";

pub enum Part<'a> {
    Text(&'a str, &'a str),
    File {
        name: &'a str,
        file_name: &'a str,
        content_type: Option<&'a str>,
        bytes: &'a [u8],
    },
}

pub fn multipart(parts: &[Part]) -> Vec<u8> {
    let mut body = Vec::new();
    for p in parts {
        body.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
        match p {
            Part::Text(name, value) => {
                body.extend_from_slice(format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes());
                body.extend_from_slice(value.as_bytes());
            }
            Part::File {
                name,
                file_name,
                content_type,
                bytes,
            } => {
                body.extend_from_slice(
                    format!("Content-Disposition: form-data; name=\"{name}\"; filename=\"{file_name}\"\r\n").as_bytes(),
                );
                if let Some(ct) = content_type {
                    body.extend_from_slice(format!("Content-Type: {ct}\r\n").as_bytes());
                }
                body.extend_from_slice(b"\r\n");
                body.extend_from_slice(bytes);
            }
        }
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}

pub fn chat_request(parts: &[Part]) -> Request<Body> {
    Request::post("/v1/chat")
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(multipart(parts)))
        .unwrap()
}

pub async fn packaged_index() -> VectorIndex {
    build_index(&HashNgramEmbedder::new(), &corpus::packaged(), ChunkConfig::default())
        .await
        .unwrap()
}

pub async fn agent_with(detector: Arc<dyn DetectionBackend>, gateway: LlmGateway, index: VectorIndex) -> Agent {
    let embedder: Arc<dyn Embedder> = Arc::new(HashNgramEmbedder::new());
    Agent::new(
        embedder,
        detector,
        gateway,
        index,
        GateConfig::packaged(),
        Locale::packaged(),
        AgentConfig::default(),
    )
    .await
    .unwrap()
}

pub async fn mock_state() -> AppState {
    state_with(agent_with(Arc::new(MockDetector::packaged()), LlmGateway::mock(), packaged_index().await).await)
}

pub fn state_with(agent: Agent) -> AppState {
    AppState::new(
        agent,
        SessionStore::new(std::time::Duration::from_secs(600)),
        Limits::default(),
        Some(TOKEN.into()),
    )
}

pub async fn send(state: &AppState, req: Request<Body>) -> (StatusCode, Value) {
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let json = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, json)
}

pub fn image(name: &str) -> &'static [u8] {
    eartriage_core::diagnosis::packaged_image(name).unwrap()
}

/// Address that refuses connections: bound once, then released.
pub async fn refused() -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    format!("http://{addr}")
}
