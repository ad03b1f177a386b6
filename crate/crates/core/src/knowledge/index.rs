//! Exact cosine-similarity index over embedded chunks.
//!
//! # `.aidx` layout (all integers little-endian)
//!
//! ```text
//! magic          4 bytes  "AIDX"
//! format         u32      currently 1
//! dim            u32
//! revision       u64
//! descriptor     u32 byte length + UTF-8
//! count          u64
//! count records:
//!   chunk_id     u32 byte length + UTF-8
//!   source_doc   u32 byte length + UTF-8
//!   ordinal      u64
//!   text         u32 byte length + UTF-8
//!   vector       dim x f64 (IEEE-754 bits)
//! ```

use std::collections::HashSet;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::chunk::Chunk;
use super::embed::{EmbedError, Embedder, EmbeddingVector};

pub const INDEX_MAGIC: &[u8; 4] = b"AIDX";
pub const INDEX_FORMAT_VERSION: u32 = 1;
pub const INDEX_EXTENSION: &str = "aidx";

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("index is empty")]
    EmptyIndex,
    #[error("index was built with embedder {index:?} but the active embedder is {active:?}")]
    EmbedderMismatch { index: String, active: String },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("duplicate chunk id {0}")]
    DuplicateChunk(String),
    #[error("vector has dim {got}, index dim is {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("index file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub chunk: Chunk,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk: Chunk,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    entries: Vec<IndexEntry>,
    ids: HashSet<String>,
    dim: usize,
    embedder_descriptor: String,
    revision: u64,
}

impl VectorIndex {
    pub fn new(dim: usize, embedder_descriptor: impl Into<String>) -> Self {
        Self {
            entries: Vec::new(),
            ids: HashSet::new(),
            dim,
            embedder_descriptor: embedder_descriptor.into(),
            revision: 0,
        }
    }

    /// Embeds `chunks` with `embedder` and builds a fresh index.
    pub async fn build(embedder: &dyn Embedder, chunks: Vec<Chunk>) -> Result<Self, IndexError> {
        let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
        let vectors = if texts.is_empty() {
            Vec::new()
        } else {
            embedder.embed_batch(&texts).await?
        };
        let dim = vectors.first().map(EmbeddingVector::dim).unwrap_or(0);
        let mut index = Self::new(dim, embedder.descriptor());
        for (chunk, vector) in chunks.into_iter().zip(vectors) {
            index.insert(chunk, vector)?;
        }
        Ok(index)
    }

    pub fn insert(&mut self, chunk: Chunk, vector: EmbeddingVector) -> Result<(), IndexError> {
        if self.entries.is_empty() && self.dim == 0 {
            self.dim = vector.dim();
        }
        if vector.dim() != self.dim {
            return Err(IndexError::DimMismatch {
                expected: self.dim,
                got: vector.dim(),
            });
        }
        if !self.ids.insert(chunk.chunk_id.clone()) {
            return Err(IndexError::DuplicateChunk(chunk.chunk_id));
        }
        self.entries.push(IndexEntry { chunk, vector });
        Ok(())
    }

    /// Drops every chunk of `source_doc`; returns how many were removed.
    pub fn remove_document(&mut self, source_doc: &str) -> usize {
        let before = self.entries.len();
        let ids = &mut self.ids;
        self.entries.retain(|e| {
            let keep = e.chunk.source_doc != source_doc;
            if !keep {
                ids.remove(&e.chunk.chunk_id);
            }
            keep
        });
        before - self.entries.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embedder_descriptor(&self) -> &str {
        &self.embedder_descriptor
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn set_revision(&mut self, revision: u64) {
        self.revision = revision;
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    /// Exhaustive top-k by cosine score, descending; equal scores are ordered
    /// by ascending chunk id.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<ScoredChunk>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if self.entries.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        let mut scored: Vec<(f64, &IndexEntry)> =
            self.entries.iter().map(|e| (e.vector.cosine(query), e)).collect();
        let order = |a: &(f64, &IndexEntry), b: &(f64, &IndexEntry)| {
            b.0.total_cmp(&a.0)
                .then_with(|| a.1.chunk.chunk_id.cmp(&b.1.chunk.chunk_id))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        Ok(scored
            .into_iter()
            .map(|(score, e)| ScoredChunk {
                chunk: e.chunk.clone(),
                score,
            })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(&mut BufReader::new(file))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), IndexError> {
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&INDEX_FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&u32::try_from(self.dim).map_err(|_| fmt_err("dim too large"))?.to_le_bytes())?;
        w.write_all(&self.revision.to_le_bytes())?;
        write_str(w, &self.embedder_descriptor)?;
        w.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        for e in &self.entries {
            write_str(w, &e.chunk.chunk_id)?;
            write_str(w, &e.chunk.source_doc)?;
            w.write_all(&e.chunk.ordinal.to_le_bytes())?;
            write_str(w, &e.chunk.text)?;
            for v in e.vector.values() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, IndexError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != INDEX_MAGIC {
            return Err(fmt_err("bad magic"));
        }
        let format = read_u32(r)?;
        if format != INDEX_FORMAT_VERSION {
            return Err(fmt_err(&format!("unsupported format version {format}")));
        }
        let dim = read_u32(r)? as usize;
        let revision = read_u64(r)?;
        let descriptor = read_str(r)?;
        let count = read_u64(r)?;
        let mut index = VectorIndex::new(dim, descriptor);
        index.revision = revision;
        for _ in 0..count {
            let chunk_id = read_str(r)?;
            let source_doc = read_str(r)?;
            let ordinal = read_u64(r)?;
            let text = read_str(r)?;
            let mut values = Vec::with_capacity(dim);
            for _ in 0..dim {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                values.push(f64::from_le_bytes(b));
            }
            let chunk = Chunk::new(source_doc, ordinal, text);
            if chunk.chunk_id != chunk_id {
                return Err(fmt_err(&format!("chunk id {chunk_id} does not match its content")));
            }
            index.insert(chunk, EmbeddingVector::from_raw(values))?;
        }
        Ok(index)
    }

    /// One JSON object per chunk, vector included.
    pub fn export_jsonl<W: Write>(&self, w: &mut W) -> Result<(), IndexError> {
        for e in &self.entries {
            let line = JsonlRecord {
                chunk_id: &e.chunk.chunk_id,
                source_doc: &e.chunk.source_doc,
                ordinal: e.chunk.ordinal,
                text: &e.chunk.text,
                char_len: e.chunk.char_len,
                vector: e.vector.values(),
            };
            serde_json::to_writer(&mut *w, &line).map_err(|e| fmt_err(&e.to_string()))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Counterpart of [`VectorIndex::export_jsonl`]; the header fields are not
    /// part of the export and must be supplied.
    pub fn import_jsonl<R: BufRead>(r: R, embedder_descriptor: &str) -> Result<Self, IndexError> {
        let mut index = VectorIndex::new(0, embedder_descriptor);
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: OwnedJsonlRecord =
                serde_json::from_str(&line).map_err(|e| fmt_err(&format!("line {}: {e}", n + 1)))?;
            let chunk = Chunk::new(rec.source_doc, rec.ordinal, rec.text);
            if chunk.chunk_id != rec.chunk_id {
                return Err(fmt_err(&format!("line {}: chunk id does not match content", n + 1)));
            }
            index.insert(chunk, EmbeddingVector::from_raw(rec.vector))?;
        }
        Ok(index)
    }
}

#[derive(Serialize)]
struct JsonlRecord<'a> {
    chunk_id: &'a str,
    source_doc: &'a str,
    ordinal: u64,
    text: &'a str,
    char_len: usize,
    vector: &'a [f64],
}

#[derive(Deserialize)]
struct OwnedJsonlRecord {
    chunk_id: String,
    source_doc: String,
    ordinal: u64,
    text: String,
    vector: Vec<f64>,
}

fn fmt_err(msg: &str) -> IndexError {
    IndexError::Format(msg.to_string())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    let len = u32::try_from(s.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "string too long"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String, IndexError> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| fmt_err(&e.to_string()))
}

/// Embeds the query with `embedder` and searches `index`.
pub async fn retrieve(
    index: &VectorIndex,
    embedder: &dyn Embedder,
    query: &str,
    k: usize,
) -> Result<Vec<ScoredChunk>, IndexError> {
    if k == 0 {
        return Err(IndexError::InvalidK);
    }
    if index.is_empty() {
        return Err(IndexError::EmptyIndex);
    }
    if index.embedder_descriptor() != embedder.descriptor() {
        return Err(IndexError::EmbedderMismatch {
            index: index.embedder_descriptor().to_string(),
            active: embedder.descriptor().to_string(),
        });
    }
    let q = embedder.embed(query).await?;
    index.search(&q, k)
}

/// Read-mostly handle: readers take a snapshot `Arc`, writers swap in a
/// complete replacement.
#[derive(Debug, Clone)]
pub struct SharedIndex {
    inner: Arc<RwLock<Arc<VectorIndex>>>,
}

impl SharedIndex {
    pub fn new(index: VectorIndex) -> Self {
        Self {
            inner: Arc::new(RwLock::new(Arc::new(index))),
        }
    }

    pub fn snapshot(&self) -> Arc<VectorIndex> {
        self.inner.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Installs `next` with revision one past the current one and returns it.
    pub fn swap(&self, mut next: VectorIndex) -> u64 {
        let mut guard = self.inner.write().unwrap_or_else(|e| e.into_inner());
        let revision = guard.revision() + 1;
        next.set_revision(revision);
        *guard = Arc::new(next);
        revision
    }
}
