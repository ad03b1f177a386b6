//! Routes and handlers.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::multipart::MultipartRejection;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use eartriage_core::knowledge::corpus::Document;
use eartriage_core::locale::Language;
use eartriage_core::router::{ImagePayload, ReasonCode};
use eartriage_core::{Agent, AgentError, AgentResponse, IngestReport, Prompt};
use serde::{Deserialize, Serialize};

use crate::config::ServiceConfig;
use crate::error::ApiError;
use crate::session::{PromptSummary, SessionStore};
use crate::startup::{build_agent, StartupError};

const MULTIPART_SLACK: usize = 1024 * 1024;
const MAX_SESSION_ID_LEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_image_bytes: usize,
    pub max_document_bytes: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_image_bytes: crate::config::DEFAULT_MAX_IMAGE_BYTES,
            max_document_bytes: crate::config::DEFAULT_MAX_DOCUMENT_BYTES,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    pub agent: Arc<Agent>,
    pub sessions: Arc<SessionStore>,
    pub limits: Limits,
    admin_token: Option<Arc<str>>,
}

impl AppState {
    pub fn new(agent: Agent, sessions: SessionStore, limits: Limits, admin_token: Option<String>) -> Self {
        Self {
            agent: Arc::new(agent),
            sessions: Arc::new(sessions),
            limits,
            admin_token: admin_token.filter(|t| !t.is_empty()).map(Arc::from),
        }
    }

    pub async fn from_config(cfg: &ServiceConfig) -> Result<Self, StartupError> {
        let agent = build_agent(cfg).await?;
        let mut sessions = SessionStore::new(std::time::Duration::from_secs(cfg.sessions.ttl_secs));
        if let Some(path) = &cfg.sessions.transcript {
            sessions = sessions.with_transcript(path).map_err(|e| StartupError::Component {
                what: "transcript",
                message: format!("{}: {e}", path.display()),
            })?;
        }
        Ok(Self::new(
            agent,
            sessions,
            Limits {
                max_image_bytes: cfg.max_image_bytes,
                max_document_bytes: cfg.max_document_bytes,
            },
            cfg.admin_token.clone(),
        ))
    }

    fn authorized(&self, headers: &HeaderMap) -> bool {
        let Some(expected) = &self.admin_token else {
            return false;
        };
        let given = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .unwrap_or("");
        constant_time_eq(given.as_bytes(), expected.as_bytes())
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

pub fn router(state: AppState) -> Router {
    let chat_limit = state.limits.max_image_bytes + MULTIPART_SLACK;
    let doc_limit = state.limits.max_document_bytes + MULTIPART_SLACK;
    Router::new()
        .route("/v1/chat", post(chat).layer(DefaultBodyLimit::max(chat_limit)))
        .route("/v1/admin/ingest", post(ingest).layer(DefaultBodyLimit::max(doc_limit)))
        .route("/v1/health", get(health))
        .with_state(state)
}

/// Successful `/v1/chat` body: the agent response plus routing metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatReply {
    pub session_id: String,
    /// Turn count of the session after this turn.
    pub turn: usize,
    pub reason: ReasonCode,
    pub relevance_score: Option<f64>,
    pub language: Language,
    #[serde(flatten)]
    pub response: AgentResponse,
}

fn multipart_error(e: axum::extract::multipart::MultipartError, limit: usize) -> ApiError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::too_large(limit)
    } else {
        ApiError::bad_request("bad_multipart", e.body_text())
    }
}

async fn text_field(field: axum::extract::multipart::Field<'_>, limit: usize) -> Result<String, ApiError> {
    let name = field.name().unwrap_or_default().to_string();
    field.text().await.map_err(|e| match multipart_error(e, limit) {
        err if err.status == StatusCode::PAYLOAD_TOO_LARGE => err,
        _ => ApiError::bad_request("bad_multipart", format!("field {name:?} is not valid UTF-8 text")),
    })
}

async fn chat(
    State(state): State<AppState>,
    multipart: Result<Multipart, MultipartRejection>,
) -> Result<Json<ChatReply>, ApiError> {
    let mut mp = multipart.map_err(|e| ApiError::bad_request("bad_multipart", e.body_text()))?;
    let limit = state.limits.max_image_bytes;
    let mut text = None;
    let mut image = None;
    let mut session_id = None;
    let mut lang = None;
    while let Some(field) = mp.next_field().await.map_err(|e| multipart_error(e, limit))? {
        match field.name().unwrap_or_default() {
            "text" => text = Some(text_field(field, limit).await?),
            "session_id" => session_id = Some(text_field(field, limit).await?),
            "lang" => {
                let raw = text_field(field, limit).await?;
                if !raw.trim().is_empty() {
                    let parsed: Language = raw
                        .trim()
                        .parse()
                        .map_err(|_| ApiError::bad_request("invalid_language", format!("unknown lang {raw:?}")))?;
                    lang = Some(parsed);
                }
            }
            "image" => {
                let media_type = field.content_type().unwrap_or_default().to_string();
                let bytes: Bytes = field.bytes().await.map_err(|e| multipart_error(e, limit))?;
                if bytes.len() > limit {
                    return Err(ApiError::too_large(limit));
                }
                if !bytes.is_empty() {
                    image = Some(ImagePayload {
                        bytes: bytes.to_vec(),
                        media_type,
                    });
                }
            }
            other => tracing::debug!(field = other, "ignoring unknown multipart field"),
        }
    }

    let session_id = match session_id.map(|s| s.trim().to_string()).filter(|s| !s.is_empty()) {
        Some(s) if s.len() > MAX_SESSION_ID_LEN => {
            return Err(ApiError::bad_request("invalid_session_id", "session_id is too long"))
        }
        Some(s) => s,
        None => uuid::Uuid::new_v4().to_string(),
    };
    let locale_lang = lang.unwrap_or(state.agent.config().default_language);
    let summary = PromptSummary {
        text: text.clone().filter(|t| !t.trim().is_empty()),
        image_media_type: image.as_ref().map(|i| i.media_type.clone()),
        image_bytes: image.as_ref().map(|i| i.bytes.len()),
    };
    let prompt = Prompt::new(session_id.clone(), text, image)
        .map_err(|e| ApiError::from_agent(&AgentError::Route(e), state.agent.locale(), locale_lang))?;

    let turn = match state.agent.handle(&prompt, lang).await {
        Ok(t) => t,
        Err(e) => {
            tracing::warn!(session = %session_id, error = %e, "chat turn failed");
            return Err(ApiError::from_agent(&e, state.agent.locale(), locale_lang));
        }
    };
    let count = state.sessions.record(&session_id, summary, turn.decision.reason, &turn.response);
    tracing::info!(
        session = %session_id,
        turn = count,
        route = %turn.response.route,
        reason = %turn.decision.reason,
        latency_ms = turn.response.latency_ms,
        "chat turn"
    );
    Ok(Json(ChatReply {
        session_id,
        turn: count,
        reason: turn.decision.reason,
        relevance_score: turn.decision.relevance_score,
        language: turn.language,
        response: turn.response,
    }))
}

#[derive(Deserialize)]
struct IngestJson {
    doc_id: String,
    text: String,
}

async fn ingest(State(state): State<AppState>, headers: HeaderMap, req: Request) -> Result<Json<IngestReport>, ApiError> {
    if !state.authorized(&headers) {
        tracing::warn!("rejected ingest with bad or missing admin token");
        return Err(ApiError::unauthorized());
    }
    let limit = state.limits.max_document_bytes;
    let content_type = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or_default()
        .to_ascii_lowercase();
    let doc = if content_type.starts_with("multipart/form-data") {
        let mut mp = Multipart::from_request(req, &state)
            .await
            .map_err(|e| ApiError::bad_request("bad_multipart", e.body_text()))?;
        let mut doc_id = None;
        let mut file_name = None;
        let mut text = None;
        while let Some(field) = mp.next_field().await.map_err(|e| multipart_error(e, limit))? {
            match field.name().unwrap_or_default() {
                "doc_id" => doc_id = Some(text_field(field, limit).await?),
                "text" | "file" => {
                    file_name = field.file_name().map(str::to_string);
                    text = Some(text_field(field, limit).await?);
                }
                _ => {}
            }
        }
        let doc_id = doc_id
            .filter(|d| !d.trim().is_empty())
            .or_else(|| file_name.as_deref().map(file_stem))
            .ok_or_else(|| ApiError::bad_request("missing_doc_id", "doc_id is required"))?;
        Document::new(doc_id.trim(), text.unwrap_or_default())
    } else {
        let body = axum::body::to_bytes(req.into_body(), limit + MULTIPART_SLACK)
            .await
            .map_err(|_| ApiError::too_large(limit))?;
        if body.iter().all(u8::is_ascii_whitespace) {
            return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_document", "request body is empty"));
        }
        let parsed: IngestJson = serde_json::from_slice(&body)
            .map_err(|e| ApiError::bad_request("bad_json", format!("expected {{\"doc_id\", \"text\"}}: {e}")))?;
        if parsed.doc_id.trim().is_empty() {
            return Err(ApiError::bad_request("missing_doc_id", "doc_id is required"));
        }
        Document::new(parsed.doc_id.trim(), parsed.text)
    };
    if doc.text.len() > limit {
        return Err(ApiError::too_large(limit));
    }
    let report = state.agent.ingest(&doc).await.map_err(|e| ApiError::from_ingest(&e))?;
    Ok(Json(report))
}

fn file_stem(name: &str) -> String {
    std::path::Path::new(name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| name.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HealthStatus {
    Ok,
    Degraded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reachability {
    Reachable,
    Unreachable,
}

impl From<bool> for Reachability {
    fn from(up: bool) -> Self {
        if up {
            Reachability::Reachable
        } else {
            Reachability::Unreachable
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendHealth {
    pub detector: Reachability,
    pub embedder: Reachability,
    pub generator: Reachability,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexHealth {
    pub chunks: usize,
    pub version: u64,
    pub embedder: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: HealthStatus,
    pub backends: BackendHealth,
    pub index: IndexHealth,
}

/// Pings each backend (no generation call) and reports the index size.
pub async fn health_report(agent: &Agent) -> Health {
    let (detector, embedder, generator) =
        tokio::join!(agent.detector().ping(), agent.embedder().ping(), agent.gateway().ping());
    let index = agent.index().snapshot();
    let ok = detector && embedder && generator && !index.is_empty();
    Health {
        status: if ok { HealthStatus::Ok } else { HealthStatus::Degraded },
        backends: BackendHealth {
            detector: detector.into(),
            embedder: embedder.into(),
            generator: generator.into(),
        },
        index: IndexHealth {
            chunks: index.len(),
            version: index.revision(),
            embedder: index.embedder_descriptor().to_string(),
        },
    }
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(health_report(&state.agent).await)
}
