//! Text generation backends and the gateway that fronts them.

use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::http::{self, TransportError};
use crate::locale::Language;
use crate::response::AgentResponse;
use crate::router::RoutePath;

pub const DEFAULT_MAX_TOKENS: u32 = 512;
pub const DEFAULT_TEMPERATURE: f64 = 0.2;
/// Name of the environment variable holding the generator API key.
pub const API_KEY_ENV: &str = "EARTRIAGE_LLM_API_KEY";

/// Chars of the prompt echoed back by [`MockGenerator`].
pub const MOCK_ECHO_CHARS: usize = 1200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerationError {
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("generator unavailable: {0}")]
    GeneratorUnavailable(String),
    #[error("generator rate limited: {message}")]
    RateLimited {
        message: String,
        retry_after: Option<Duration>,
    },
    #[error("generator returned an invalid response: {0}")]
    InvalidResponse(String),
}

impl GenerationError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            GenerationError::GeneratorUnavailable(_) | GenerationError::RateLimited { .. }
        )
    }
}

impl From<TransportError> for GenerationError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Unavailable(m) => GenerationError::GeneratorUnavailable(m),
            TransportError::RateLimited(message, retry_after) => GenerationError::RateLimited { message, retry_after },
            TransportError::InvalidResponse(m) => GenerationError::InvalidResponse(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub language: Language,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, language: Language) -> Result<Self, GenerationError> {
        let req = Self {
            prompt: prompt.into(),
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
            language,
        };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.prompt.trim().is_empty() {
            return Err(GenerationError::InvalidRequest("prompt is empty".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GenerationError::InvalidRequest(format!(
                "temperature {} is not a non-negative number",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[async_trait]
pub trait GeneratorBackend: Send + Sync {
    fn descriptor(&self) -> &str;

    async fn generate(&self, req: &GenerationRequest) -> Result<String, GenerationError>;

    async fn ping(&self) -> bool {
        true
    }
}

/// Offline generator. Output is a pure function of the request: a tagged
/// echo of the first [`MOCK_ECHO_CHARS`] chars of the prompt followed by a
/// fixed reply body for the request language.
#[derive(Debug, Clone, Default)]
pub struct MockGenerator;

impl MockGenerator {
    pub const DESCRIPTOR: &'static str = "mock-echo/v1";

    pub fn transcript(req: &GenerationRequest) -> String {
        let head: String = req.prompt.chars().take(MOCK_ECHO_CHARS).collect();
        let body = match req.language {
            Language::En => "Thank you for your question. This reply comes from the offline mock generator; \
                             a deployed language model would answer here. For any concern about your \
                             child's ears, please talk to a doctor.",
            Language::Zh => "感谢您的提问。这是离线模拟生成器的回复，部署的语言模型会在此作答。\
                             如对孩子的耳朵有任何担心，请咨询医生。",
        };
        format!("[mock-llm lang={}]\n<<<\n{head}\n>>>\n{body}", req.language)
    }
}

#[async_trait]
impl GeneratorBackend for MockGenerator {
    fn descriptor(&self) -> &str {
        Self::DESCRIPTOR
    }

    async fn generate(&self, req: &GenerationRequest) -> Result<String, GenerationError> {
        req.validate()?;
        Ok(Self::transcript(req))
    }
}

#[derive(Serialize)]
struct GenerateBody<'a> {
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
}

#[derive(Deserialize)]
struct GenerateReply {
    text: String,
    #[allow(dead_code)]
    descriptor: Option<String>,
}

/// Client for `POST {endpoint}/generate {"prompt","max_tokens","temperature"} -> {"text","descriptor"}`.
#[derive(Clone)]
pub struct HttpGenerator {
    client: reqwest::Client,
    endpoint: String,
    api_key: Option<String>,
    descriptor: String,
}

impl std::fmt::Debug for HttpGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpGenerator")
            .field("endpoint", &self.endpoint)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpGenerator {
    /// Reads the API key from [`API_KEY_ENV`] when set.
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, GenerationError> {
        let endpoint = http::trim_endpoint(endpoint.into());
        Ok(Self {
            client: http::client(timeout)?,
            descriptor: format!("http:{endpoint}"),
            endpoint,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        })
    }
}

#[async_trait]
impl GeneratorBackend for HttpGenerator {
    fn descriptor(&self) -> &str {
        &self.descriptor
    }

    async fn generate(&self, req: &GenerationRequest) -> Result<String, GenerationError> {
        req.validate()?;
        let url = format!("{}/generate", self.endpoint);
        let body = GenerateBody {
            prompt: &req.prompt,
            max_tokens: req.max_tokens,
            temperature: req.temperature,
        };
        let reply: GenerateReply = http::post_json(&self.client, &url, &body, self.api_key.as_deref()).await?;
        Ok(reply.text)
    }

    async fn ping(&self) -> bool {
        http::ping(&self.client, &self.endpoint).await
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_backoff: Duration,
    /// Longest server-requested wait we are willing to honour.
    pub max_retry_after: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 1,
            base_backoff: Duration::from_millis(200),
            max_retry_after: Duration::from_secs(5),
        }
    }
}

/// Fronts a generator backend with an in-flight cap and the retry policy.
#[derive(Clone)]
pub struct LlmGateway {
    backend: Arc<dyn GeneratorBackend>,
    permits: Arc<Semaphore>,
    retry: RetryPolicy,
}

impl LlmGateway {
    pub fn new(backend: Arc<dyn GeneratorBackend>, max_in_flight: usize, retry: RetryPolicy) -> Self {
        Self {
            backend,
            permits: Arc::new(Semaphore::new(max_in_flight.max(1))),
            retry,
        }
    }

    pub fn mock() -> Self {
        Self::new(Arc::new(MockGenerator), 16, RetryPolicy::default())
    }

    pub fn descriptor(&self) -> &str {
        self.backend.descriptor()
    }

    pub async fn ping(&self) -> bool {
        self.backend.ping().await
    }

    pub async fn generate(&self, req: &GenerationRequest) -> Result<String, GenerationError> {
        req.validate()?;
        let _permit = self
            .permits
            .acquire()
            .await
            .map_err(|_| GenerationError::GeneratorUnavailable("gateway closed".into()))?;
        let mut attempt = 0;
        loop {
            match self.backend.generate(req).await {
                Ok(text) => return Ok(text),
                Err(e) if attempt < self.retry.max_retries => {
                    let wait = match &e {
                        GenerationError::GeneratorUnavailable(_) => {
                            let jitter: f64 = rand::thread_rng().gen_range(0.5..1.5);
                            self.retry.base_backoff.mul_f64(jitter)
                        }
                        GenerationError::RateLimited { retry_after, .. } => {
                            let wait = retry_after.unwrap_or(self.retry.base_backoff);
                            if wait > self.retry.max_retry_after {
                                return Err(e);
                            }
                            wait
                        }
                        _ => return Err(e),
                    };
                    tracing::warn!(error = %e, attempt, wait_ms = wait.as_millis() as u64, "generation failed, retrying");
                    tokio::time::sleep(wait).await;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Plain generation with no retrieved context, for prompts the router sent
/// to the fallback path.
pub async fn fallback_reply(
    text: &str,
    gateway: &LlmGateway,
    language: Language,
) -> Result<AgentResponse, GenerationError> {
    let started = Instant::now();
    let req = GenerationRequest::new(text, language)?;
    let reply = gateway.generate(&req).await?;
    Ok(AgentResponse {
        route: RoutePath::Fallback,
        text: reply,
        diagnosis: None,
        provenance: Vec::new(),
        disclaimer_included: false,
        latency_ms: started.elapsed().as_millis() as u64,
    })
}
