//! Turns a validated [`ServiceConfig`] into a ready [`Agent`].

use std::sync::Arc;
use std::time::Duration;

use eartriage_core::diagnosis::{DetectionBackend, DiagnosisConfig, HttpDetector, MockDetector};
use eartriage_core::knowledge::corpus;
use eartriage_core::knowledge::{
    build_index, ChunkConfig, Embedder, HashNgramEmbedder, HttpEmbedder, KnowledgeConfig, PromptTemplate,
    VectorIndex,
};
use eartriage_core::llm::{GeneratorBackend, HttpGenerator, LlmGateway, MockGenerator, RetryPolicy};
use eartriage_core::locale::{Language, Locale};
use eartriage_core::router::GateConfig;
use eartriage_core::{Agent, AgentConfig};
use thiserror::Error;

use crate::config::ServiceConfig;

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("{what}: {message}")]
    Component { what: &'static str, message: String },
}

fn fail(what: &'static str) -> impl FnOnce(String) -> StartupError {
    move |message| StartupError::Component { what, message }
}

fn ms(v: u64) -> Duration {
    Duration::from_millis(v)
}

pub async fn build_embedder(cfg: &ServiceConfig) -> Result<Arc<dyn Embedder>, StartupError> {
    Ok(match &cfg.embedder.endpoint {
        Some(url) => Arc::new(
            HttpEmbedder::connect(url.clone(), ms(cfg.embedder.timeout_ms))
                .await
                .map_err(|e| fail("embedder")(e.to_string()))?,
        ),
        None => Arc::new(HashNgramEmbedder::new()),
    })
}

pub fn build_detector(cfg: &ServiceConfig) -> Result<Arc<dyn DetectionBackend>, StartupError> {
    Ok(match (&cfg.detector.endpoint, &cfg.detector.mock_manifest) {
        (Some(url), _) => Arc::new(
            HttpDetector::new(url.clone(), ms(cfg.detector.timeout_ms)).map_err(|e| fail("detector")(e.to_string()))?,
        ),
        (None, Some(manifest)) => Arc::new(MockDetector::from_manifest(manifest).map_err(fail("detector"))?),
        (None, None) => Arc::new(MockDetector::packaged()),
    })
}

pub fn build_gateway(cfg: &ServiceConfig) -> Result<LlmGateway, StartupError> {
    let backend: Arc<dyn GeneratorBackend> = match &cfg.generator.endpoint {
        Some(url) => Arc::new(
            HttpGenerator::new(url.clone(), ms(cfg.generator.timeout_ms))
                .map_err(|e| fail("generator")(e.to_string()))?,
        ),
        None => Arc::new(MockGenerator),
    };
    Ok(LlmGateway::new(backend, cfg.generator.max_in_flight, RetryPolicy::default()))
}

pub fn agent_config(cfg: &ServiceConfig) -> Result<AgentConfig, StartupError> {
    let mut out = AgentConfig {
        diagnosis: DiagnosisConfig {
            ignore_thresh: cfg.detector.ignore_thresh,
        },
        knowledge: KnowledgeConfig {
            k: cfg.knowledge.k,
            max_prompt_chars: cfg.knowledge.max_prompt_chars,
            chunk: ChunkConfig {
                max_chunk_chars: cfg.knowledge.max_chunk_chars,
                overlap_chars: cfg.knowledge.overlap_chars,
            },
        },
        default_language: cfg.default_language,
        ..AgentConfig::default()
    };
    if let Some(p) = &cfg.knowledge.template_en {
        out.templates.en = PromptTemplate::from_file(p, Language::En).map_err(|e| fail("template_en")(e.to_string()))?;
    }
    if let Some(p) = &cfg.knowledge.template_zh {
        out.templates.zh = PromptTemplate::from_file(p, Language::Zh).map_err(|e| fail("template_zh")(e.to_string()))?;
    }
    Ok(out)
}

pub fn gate_config(cfg: &ServiceConfig) -> Result<GateConfig, StartupError> {
    let mut gate = match &cfg.gate.config {
        Some(p) => GateConfig::load(p).map_err(|e| fail("gate")(e.to_string()))?,
        None => GateConfig::packaged(),
    };
    if let Some(t) = cfg.gate.threshold {
        gate.threshold = t;
    }
    gate.validate().map_err(|e| fail("gate")(e.to_string()))?;
    Ok(gate)
}

pub fn locale(cfg: &ServiceConfig) -> Result<Arc<Locale>, StartupError> {
    match &cfg.locale {
        Some(p) => {
            let json = std::fs::read_to_string(p).map_err(|e| fail("locale")(e.to_string()))?;
            Ok(Arc::new(Locale::from_json(&json).map_err(|e| fail("locale")(e.to_string()))?))
        }
        None => Ok(Locale::packaged()),
    }
}

/// Loads the configured index, or builds one from the configured corpus.
pub async fn initial_index(
    cfg: &ServiceConfig,
    embedder: &dyn Embedder,
    chunk: ChunkConfig,
) -> Result<VectorIndex, StartupError> {
    let k = &cfg.knowledge;
    let index = if let Some(p) = &k.index_path {
        VectorIndex::load(p).map_err(|e| fail("index")(e.to_string()))?
    } else {
        let docs = match &k.corpus_dir {
            Some(dir) => corpus::load_dir(dir).map_err(|e| fail("corpus")(e.to_string()))?,
            None if k.packaged_corpus => corpus::packaged(),
            None => Vec::new(),
        };
        if docs.is_empty() {
            VectorIndex::new(0, embedder.descriptor())
        } else {
            build_index(embedder, &docs, chunk).await.map_err(|e| fail("index")(e.to_string()))?
        }
    };
    if !index.is_empty() && index.embedder_descriptor() != embedder.descriptor() {
        return Err(fail("index")(format!(
            "index was built with embedder {:?} but the active one is {:?}",
            index.embedder_descriptor(),
            embedder.descriptor()
        )));
    }
    Ok(index)
}

pub async fn build_agent(cfg: &ServiceConfig) -> Result<Agent, StartupError> {
    cfg.validate()?;
    let embedder = build_embedder(cfg).await?;
    let agent_cfg = agent_config(cfg)?;
    let index = initial_index(cfg, embedder.as_ref(), agent_cfg.knowledge.chunk).await?;
    tracing::info!(
        chunks = index.len(),
        embedder = embedder.descriptor(),
        "knowledge index ready"
    );
    Agent::new(
        embedder,
        build_detector(cfg)?,
        build_gateway(cfg)?,
        index,
        gate_config(cfg)?,
        locale(cfg)?,
        agent_cfg,
    )
    .await
    .map_err(|e| fail("agent")(e.to_string()))
}
