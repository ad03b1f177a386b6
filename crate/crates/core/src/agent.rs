//! The full prompt pipeline: route, then run the chosen path.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Mutex;

use crate::diagnosis::{
    diagnose, validate_image, DetectionBackend, DiagnosisConfig, DiagnosisError, DiagnosisOutcome, ImageError,
    ImageFormat, MockDetector,
};
use crate::knowledge::corpus::{self, Document};
use crate::knowledge::{
    self, build_index, ingest_document, EmbedError, Embedder, HashNgramEmbedder, IndexError, KnowledgeConfig, KnowledgeError,
    PromptTemplate, SharedIndex, VectorIndex,
};
use crate::llm::{fallback_reply, GenerationError, LlmGateway};
use crate::locale::{Language, Locale};
use crate::response::AgentResponse;
use crate::router::{GateConfig, Prompt, RouteDecision, RouteError, RoutePath, Router};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Diagnosis(#[from] DiagnosisError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
}

impl AgentError {
    pub fn is_retryable(&self) -> bool {
        match self {
            AgentError::Route(RouteError::EmbedderFailure(EmbedError::Unavailable(_))) => true,
            AgentError::Diagnosis(e) => e.is_retryable(),
            AgentError::Generation(e) => e.is_retryable(),
            AgentError::Knowledge(KnowledgeError::Generation(e)) => e.is_retryable(),
            AgentError::Knowledge(KnowledgeError::Retrieval(IndexError::Embed(EmbedError::Unavailable(_)))) => true,
            _ => false,
        }
    }

    /// True when the caller sent something unusable (empty prompt, bad image).
    pub fn is_client_error(&self) -> bool {
        matches!(self, AgentError::Route(RouteError::EmptyPrompt) | AgentError::Image(_))
    }

    pub fn is_empty_index(&self) -> bool {
        matches!(self, AgentError::Knowledge(KnowledgeError::Retrieval(IndexError::EmptyIndex)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTurn {
    pub decision: RouteDecision,
    pub language: Language,
    pub response: AgentResponse,
}

#[derive(Debug, Clone)]
pub struct Templates {
    pub en: PromptTemplate,
    pub zh: PromptTemplate,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            en: PromptTemplate::packaged(Language::En),
            zh: PromptTemplate::packaged(Language::Zh),
        }
    }
}

impl Templates {
    pub fn for_language(&self, lang: Language) -> &PromptTemplate {
        match lang {
            Language::En => &self.en,
            Language::Zh => &self.zh,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AgentConfig {
    pub diagnosis: DiagnosisConfig,
    pub knowledge: KnowledgeConfig,
    pub templates: Templates,
    /// Used when the caller gives no language and the text gives no hint.
    pub default_language: Language,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub doc_id: String,
    pub chunks: usize,
    pub index_chunks: usize,
    pub index_version: u64,
}

pub struct Agent {
    router: Router,
    embedder: Arc<dyn Embedder>,
    detector: Arc<dyn DetectionBackend>,
    gateway: LlmGateway,
    index: SharedIndex,
    locale: Arc<Locale>,
    cfg: AgentConfig,
    ingest_lock: Mutex<()>,
}

impl Agent {
    pub async fn new(
        embedder: Arc<dyn Embedder>,
        detector: Arc<dyn DetectionBackend>,
        gateway: LlmGateway,
        index: VectorIndex,
        gate: GateConfig,
        locale: Arc<Locale>,
        cfg: AgentConfig,
    ) -> Result<Self, AgentError> {
        let router = Router::new(embedder.clone(), gate).await?;
        Ok(Self {
            router,
            embedder,
            detector,
            gateway,
            index: SharedIndex::new(index),
            locale,
            cfg,
            ingest_lock: Mutex::new(()),
        })
    }

    /// All-offline agent: hash embedder over the packaged corpus, scripted mock
    /// detector and echo generator.
    pub async fn mock() -> Result<Self, AgentError> {
        let embedder: Arc<dyn Embedder> = Arc::new(HashNgramEmbedder::new());
        let cfg = AgentConfig::default();
        let index = build_index(embedder.as_ref(), &corpus::packaged(), cfg.knowledge.chunk).await?;
        Self::new(
            embedder,
            Arc::new(MockDetector::packaged()),
            LlmGateway::mock(),
            index,
            GateConfig::packaged(),
            Locale::packaged(),
            cfg,
        )
        .await
    }

    pub fn router(&self) -> &Router {
        &self.router
    }

    pub fn index(&self) -> &SharedIndex {
        &self.index
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn detector(&self) -> &Arc<dyn DetectionBackend> {
        &self.detector
    }

    pub fn gateway(&self) -> &LlmGateway {
        &self.gateway
    }

    pub fn locale(&self) -> &Locale {
        &self.locale
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn resolve_language(&self, prompt: &Prompt, requested: Option<Language>) -> Language {
        requested
            .or_else(|| prompt.text().map(Language::detect).filter(|l| *l == Language::Zh))
            .unwrap_or(self.cfg.default_language)
    }

    pub async fn handle(&self, prompt: &Prompt, language: Option<Language>) -> Result<AgentTurn, AgentError> {
        let started = Instant::now();
        let lang = self.resolve_language(prompt, language);
        let decision = self.router.route(prompt).await?;
        let mut response = match decision.path {
            RoutePath::ExpertDiagnosis => self.run_diagnosis(prompt, lang).await?,
            RoutePath::ExpertKnowledge => {
                let snapshot = self.index.snapshot();
                let k = self.cfg.knowledge;
                knowledge::answer(
                    prompt.text().unwrap_or_default(),
                    &snapshot,
                    self.embedder.as_ref(),
                    &self.gateway,
                    self.cfg.templates.for_language(lang),
                    k.k,
                    k.max_prompt_chars,
                )
                .await?
            }
            RoutePath::Fallback => fallback_reply(prompt.text().unwrap_or_default(), &self.gateway, lang).await?,
        };
        response.latency_ms = started.elapsed().as_millis() as u64;
        Ok(AgentTurn {
            decision,
            language: lang,
            response,
        })
    }

    async fn run_diagnosis(&self, prompt: &Prompt, lang: Language) -> Result<AgentResponse, AgentError> {
        let image = prompt.image().ok_or(RouteError::EmptyPrompt)?;
        let declared = image.media_type.as_str();
        let media_type = if ImageFormat::from_media_type(declared).is_none()
            && (declared.is_empty() || declared.starts_with("application/octet-stream"))
        {
            ImageFormat::sniff(&image.bytes).map(ImageFormat::media_type).unwrap_or(declared)
        } else {
            declared
        };
        let meta = validate_image(&image.bytes, media_type)?;
        let outcome = diagnose(
            &image.bytes,
            &meta,
            self.detector.as_ref(),
            &self.cfg.diagnosis,
            &self.locale,
            lang,
        )
        .await?;
        Ok(match outcome {
            DiagnosisOutcome::Diagnosed(d) => AgentResponse {
                route: RoutePath::ExpertDiagnosis,
                text: d.render(),
                diagnosis: Some(d),
                provenance: Vec::new(),
                disclaimer_included: true,
                latency_ms: 0,
            },
            // no ear: answered like any off-topic prompt
            DiagnosisOutcome::NoEarFound => AgentResponse {
                route: RoutePath::Fallback,
                text: self.locale.get(lang, "irrelevant_image").to_string(),
                diagnosis: None,
                provenance: Vec::new(),
                disclaimer_included: false,
                latency_ms: 0,
            },
        })
    }

    /// Chunks and embeds `doc`, then swaps in an index where it replaces any
    /// earlier version of the same document. Ingestions are serialised;
    /// readers keep using the previous index until the swap.
    pub async fn ingest(&self, doc: &Document) -> Result<IngestReport, AgentError> {
        let _guard = self.ingest_lock.lock().await;
        let base = self.index.snapshot();
        let (next, chunks) = ingest_document(&base, self.embedder.as_ref(), doc, self.cfg.knowledge.chunk).await?;
        let index_chunks = next.len();
        let index_version = self.index.swap(next);
        tracing::info!(doc = %doc.doc_id, chunks, index_chunks, index_version, "document ingested");
        Ok(IngestReport {
            doc_id: doc.doc_id.clone(),
            chunks,
            index_chunks,
            index_version,
        })
    }
}
