//! Embedding backends.
//!
//! [`HashNgramEmbedder`] is the deterministic, dependency-free embedder used
//! by tests, fixtures and `--mock` runs. Its scheme, in full:
//!
//! 1. lower-case the text, replace every non-alphanumeric char by a space,
//!    collapse whitespace runs and trim;
//! 2. pad with one space on each side;
//! 3. for every window of three consecutive chars, hash its UTF-8 bytes with
//!    64-bit FNV-1a and add 1 to bucket `hash % 256`;
//! 4. L2-normalise the bucket counts.
//!
//! Any text with at least one alphanumeric char yields a unit vector with
//! non-negative entries, so cosine scores between two such vectors lie in
//! `[0, 1]`.

use std::sync::OnceLock;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{self, TransportError};

pub const HASH_EMBEDDER_DIM: usize = 256;
const NGRAM: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedder unavailable: {0}")]
    Unavailable(String),
    #[error("embedder returned an invalid response: {0}")]
    InvalidResponse(String),
}

impl From<TransportError> for EmbedError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Unavailable(m) | TransportError::RateLimited(m, _) => EmbedError::Unavailable(m),
            TransportError::InvalidResponse(m) => EmbedError::InvalidResponse(m),
        }
    }
}

/// Fixed-dimension real vector, normalised to unit length on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// L2-normalises `values`. A zero vector is kept as is.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        Self(values)
    }

    /// Wraps already-normalised values without touching them (index loading).
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cosine of two stored vectors. Both are unit length (or zero), so this is
    /// the dot product.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

/// A text embedding backend. Implementations must tolerate concurrent calls.
#[async_trait]
pub trait Embedder: Send + Sync {
    /// Identifies the model and scheme; stored in every index it populates.
    fn descriptor(&self) -> &str;

    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError>;

    async fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut out = self.embed_batch(&[text.to_string()]).await?;
        out.pop()
            .ok_or_else(|| EmbedError::InvalidResponse("no vector returned".into()))
    }

    /// Cheap reachability probe for health reporting.
    async fn ping(&self) -> bool {
        true
    }
}

/// Character-trigram hashing embedder, see the module docs.
#[derive(Debug, Clone)]
pub struct HashNgramEmbedder {
    descriptor: String,
}

impl Default for HashNgramEmbedder {
    fn default() -> Self {
        Self::new()
    }
}

impl HashNgramEmbedder {
    pub fn new() -> Self {
        Self {
            descriptor: format!("hash-ngram/v1;n={NGRAM};dim={HASH_EMBEDDER_DIM}"),
        }
    }

    pub fn embed_sync(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let cleaned: String = text
            .to_lowercase()
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { ' ' })
            .collect();
        let words: Vec<&str> = cleaned.split_whitespace().collect();
        if words.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let padded: Vec<char> = format!(" {} ", words.join(" ")).chars().collect();
        let mut buckets = vec![0.0f64; HASH_EMBEDDER_DIM];
        let mut buf = [0u8; 4];
        for window in padded.windows(NGRAM) {
            let mut hash = FNV_OFFSET;
            for c in window {
                for b in c.encode_utf8(&mut buf).bytes() {
                    hash ^= u64::from(b);
                    hash = hash.wrapping_mul(FNV_PRIME);
                }
            }
            buckets[(hash % HASH_EMBEDDER_DIM as u64) as usize] += 1.0;
        }
        Ok(EmbeddingVector::normalized(buckets))
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[async_trait]
impl Embedder for HashNgramEmbedder {
    fn descriptor(&self) -> &str {
        &self.descriptor
    }

    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| self.embed_sync(t)).collect()
    }
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    dim: usize,
    descriptor: String,
}

/// Client for a remote embedder speaking
/// `POST {endpoint}/embed {"texts": [..]} -> {"vectors", "dim", "descriptor"}`.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    client: reqwest::Client,
    endpoint: String,
    descriptor: OnceLock<String>,
    dim: OnceLock<usize>,
}

impl HttpEmbedder {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, EmbedError> {
        Ok(Self {
            client: http::client(timeout).map_err(EmbedError::from)?,
            endpoint: http::trim_endpoint(endpoint.into()),
            descriptor: OnceLock::new(),
            dim: OnceLock::new(),
        })
    }

    /// Builds the client and learns the remote descriptor with a probe call.
    pub async fn connect(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, EmbedError> {
        let this = Self::new(endpoint, timeout)?;
        this.embed_batch(&["ping".to_string()]).await?;
        Ok(this)
    }

    fn check_response(&self, texts: &[String], resp: &EmbedResponse) -> Result<(), EmbedError> {
        if resp.vectors.len() != texts.len() {
            return Err(EmbedError::InvalidResponse(format!(
                "{} vectors for {} texts",
                resp.vectors.len(),
                texts.len()
            )));
        }
        if let Some(v) = resp.vectors.iter().find(|v| v.len() != resp.dim) {
            return Err(EmbedError::InvalidResponse(format!(
                "vector of length {} with declared dim {}",
                v.len(),
                resp.dim
            )));
        }
        let known = self.descriptor.get_or_init(|| resp.descriptor.clone());
        if *known != resp.descriptor {
            return Err(EmbedError::InvalidResponse(format!(
                "descriptor changed from {known:?} to {:?}",
                resp.descriptor
            )));
        }
        let dim = *self.dim.get_or_init(|| resp.dim);
        if dim != resp.dim {
            return Err(EmbedError::InvalidResponse(format!("dim changed from {dim} to {}", resp.dim)));
        }
        Ok(())
    }
}

#[async_trait]
impl Embedder for HttpEmbedder {
    fn descriptor(&self) -> &str {
        self.descriptor.get().map(String::as_str).unwrap_or("remote/unknown")
    }

    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbedError::EmptyText);
        }
        let url = format!("{}/embed", self.endpoint);
        let resp: EmbedResponse = http::post_json(&self.client, &url, &EmbedRequest { texts }, None).await?;
        self.check_response(texts, &resp)?;
        Ok(resp.vectors.into_iter().map(EmbeddingVector::normalized).collect())
    }

    async fn ping(&self) -> bool {
        http::ping(&self.client, &self.endpoint).await
    }
}
