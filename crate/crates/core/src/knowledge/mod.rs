//! Retrieval-augmented answering over an ear-deformity document corpus.

pub mod chunk;
pub mod corpus;
pub mod embed;
pub mod index;
pub mod template;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{GenerationError, GenerationRequest, LlmGateway};
use crate::response::{AgentResponse, Provenance};
use crate::router::RoutePath;

pub use chunk::{chunk_document, Chunk, ChunkConfig, ChunkError};
pub use embed::{Embedder, EmbeddingVector, EmbedError, HashNgramEmbedder, HttpEmbedder};
pub use index::{retrieve, IndexError, ScoredChunk, SharedIndex, VectorIndex};
pub use template::{assemble_prompt, PromptTemplate, TemplateError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnowledgeConfig {
    pub k: usize,
    pub max_prompt_chars: usize,
    pub chunk: ChunkConfig,
}

impl Default for KnowledgeConfig {
    fn default() -> Self {
        Self {
            k: 4,
            max_prompt_chars: template::DEFAULT_MAX_PROMPT_CHARS,
            chunk: ChunkConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error(transparent)]
    Retrieval(#[from] IndexError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Chunking(#[from] ChunkError),
}

/// Retrieves the top `k` chunks for `query`, fills the template and asks the
/// generator. The response lists every retrieved chunk as provenance.
pub async fn answer(
    query: &str,
    index: &VectorIndex,
    embedder: &dyn Embedder,
    gateway: &LlmGateway,
    template: &PromptTemplate,
    k: usize,
    max_prompt_chars: usize,
) -> Result<AgentResponse, KnowledgeError> {
    let started = Instant::now();
    let hits = retrieve(index, embedder, query, k).await?;
    let (prompt, used) = assemble_prompt(template, query, &hits, max_prompt_chars);
    tracing::debug!(hits = hits.len(), used = used.len(), "assembled knowledge prompt");
    let req = GenerationRequest::new(prompt, template.language())?;
    let text = gateway.generate(&req).await?;
    Ok(AgentResponse {
        route: RoutePath::ExpertKnowledge,
        text,
        diagnosis: None,
        provenance: hits
            .iter()
            .map(|h| Provenance {
                chunk_id: h.chunk.chunk_id.clone(),
                source_doc: h.chunk.source_doc.clone(),
                score: h.score,
            })
            .collect(),
        disclaimer_included: false,
        latency_ms: started.elapsed().as_millis() as u64,
    })
}

/// Chunks every document and embeds the lot into a new index.
pub async fn build_index(
    embedder: &dyn Embedder,
    documents: &[corpus::Document],
    cfg: ChunkConfig,
) -> Result<VectorIndex, KnowledgeError> {
    let mut chunks = Vec::new();
    for doc in documents {
        chunks.extend(chunk_document(&doc.doc_id, &doc.text, cfg)?);
    }
    Ok(VectorIndex::build(embedder, chunks).await?)
}

/// Returns a copy of `base` where the chunks of `doc` replace any earlier
/// chunks of the same document id, plus the new chunk count. Blank
/// documents are rejected as empty.
pub async fn ingest_document(
    base: &VectorIndex,
    embedder: &dyn Embedder,
    doc: &corpus::Document,
    cfg: ChunkConfig,
) -> Result<(VectorIndex, usize), KnowledgeError> {
    if !base.is_empty() && base.embedder_descriptor() != embedder.descriptor() {
        return Err(IndexError::EmbedderMismatch {
            index: base.embedder_descriptor().to_string(),
            active: embedder.descriptor().to_string(),
        }
        .into());
    }
    if doc.text.trim().is_empty() {
        return Err(ChunkError::EmptyDocument(doc.doc_id.clone()).into());
    }
    let chunks = chunk_document(&doc.doc_id, &doc.text, cfg)?;
    let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
    let vectors = embedder.embed_batch(&texts).await.map_err(IndexError::from)?;
    let mut next = if base.is_empty() {
        VectorIndex::new(0, embedder.descriptor())
    } else {
        base.clone()
    };
    next.remove_document(&doc.doc_id);
    let count = chunks.len();
    for (chunk, vector) in chunks.into_iter().zip(vectors) {
        next.insert(chunk, vector)?;
    }
    Ok((next, count))
}
