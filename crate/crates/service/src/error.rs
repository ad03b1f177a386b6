//! JSON error bodies: `{"error": {"code", "message", "retryable"}}`.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use eartriage_core::agent::AgentError;
use eartriage_core::knowledge::{ChunkError, KnowledgeError};
use eartriage_core::locale::{Language, Locale};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
    pub retryable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code,
                message: message.into(),
                retryable: false,
            },
        }
    }

    pub fn retryable(mut self) -> Self {
        self.body.retryable = true;
        self
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or invalid admin token")
    }

    pub fn too_large(limit: usize) -> Self {
        Self::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "payload_too_large",
            format!("upload exceeds the {limit}-byte limit"),
        )
    }

    /// Maps a failed chat turn onto a status code. User-facing texts for the
    /// unavailable cases come from the locale.
    pub fn from_agent(err: &AgentError, locale: &Locale, lang: Language) -> Self {
        if let AgentError::Route(eartriage_core::router::RouteError::EmptyPrompt) = err {
            return Self::bad_request("empty_prompt", "send a text field, an image, or both");
        }
        if let AgentError::Image(e) = err {
            return Self::bad_request("invalid_image", e.to_string());
        }
        if err.is_empty_index() {
            return Self::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "knowledge_unavailable",
                locale.get(lang, "knowledge_unavailable"),
            );
        }
        if err.is_retryable() {
            return Self::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "backend_unavailable",
                locale.get(lang, "backend_unavailable"),
            )
            .retryable();
        }
        let bad_gateway = matches!(
            err,
            AgentError::Diagnosis(_)
                | AgentError::Generation(eartriage_core::llm::GenerationError::InvalidResponse(_))
                | AgentError::Knowledge(KnowledgeError::Generation(
                    eartriage_core::llm::GenerationError::InvalidResponse(_)
                ))
                | AgentError::Knowledge(KnowledgeError::Retrieval(_))
                | AgentError::Route(eartriage_core::router::RouteError::EmbedderFailure(_))
        );
        if bad_gateway {
            return Self::new(StatusCode::BAD_GATEWAY, "bad_backend_response", err.to_string());
        }
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", err.to_string())
    }

    pub fn from_ingest(err: &AgentError) -> Self {
        match err {
            AgentError::Knowledge(KnowledgeError::Chunking(ChunkError::EmptyDocument(_))) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_document", err.to_string())
            }
            AgentError::Knowledge(KnowledgeError::Chunking(ChunkError::InvalidConfig { .. })) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", err.to_string())
            }
            e if e.is_retryable() => {
                Self::new(StatusCode::SERVICE_UNAVAILABLE, "backend_unavailable", err.to_string()).retryable()
            }
            _ => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "ingest_failed", err.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        #[derive(Serialize)]
        struct Wrapper {
            error: ErrorBody,
        }
        (self.status, Json(Wrapper { error: self.body })).into_response()
    }
}
