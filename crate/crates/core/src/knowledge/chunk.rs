//! Overlapping character-window chunking.
//!
//! Chunk `i + 1` always starts exactly `overlap_chars` chars before chunk `i`
//! ends, so dropping the first `overlap_chars` chars of every chunk but the
//! first and concatenating reproduces the document. Window ends prefer a
//! paragraph break, then a sentence end, then whitespace, and fall back to a
//! hard cut at `max_chunk_chars`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkConfig {
    pub max_chunk_chars: usize,
    pub overlap_chars: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self {
            max_chunk_chars: 512,
            overlap_chars: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChunkError {
    #[error("document {0:?} is empty")]
    EmptyDocument(String),
    #[error("overlap_chars ({overlap}) must be smaller than max_chunk_chars ({max})")]
    InvalidConfig { max: usize, overlap: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub source_doc: String,
    pub ordinal: u64,
    pub text: String,
    pub char_len: usize,
}

impl Chunk {
    pub fn new(source_doc: impl Into<String>, ordinal: u64, text: impl Into<String>) -> Self {
        let source_doc = source_doc.into();
        let text = text.into();
        Self {
            chunk_id: chunk_id(&source_doc, ordinal, &text),
            char_len: text.chars().count(),
            source_doc,
            ordinal,
            text,
        }
    }
}

/// First 16 bytes of SHA-256 over the length-prefixed source id, the ordinal
/// and the text, hex encoded.
pub fn chunk_id(source_doc: &str, ordinal: u64, text: &str) -> String {
    let mut h = Sha256::new();
    h.update((source_doc.len() as u64).to_le_bytes());
    h.update(source_doc.as_bytes());
    h.update(ordinal.to_le_bytes());
    h.update((text.len() as u64).to_le_bytes());
    h.update(text.as_bytes());
    hex::encode(&h.finalize()[..16])
}

pub fn chunk_document(doc_id: &str, text: &str, cfg: ChunkConfig) -> Result<Vec<Chunk>, ChunkError> {
    if cfg.max_chunk_chars == 0 || cfg.overlap_chars >= cfg.max_chunk_chars {
        return Err(ChunkError::InvalidConfig {
            max: cfg.max_chunk_chars,
            overlap: cfg.overlap_chars,
        });
    }
    if text.is_empty() {
        return Err(ChunkError::EmptyDocument(doc_id.to_string()));
    }
    let chars: Vec<char> = text.chars().collect();
    let spans = window_spans(&chars, cfg);
    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(i, (s, e))| Chunk::new(doc_id, i as u64, chars[s..e].iter().collect::<String>()))
        .collect())
}

/// Inverse of [`chunk_document`] for chunks produced with `overlap_chars`.
pub fn reassemble(chunks: &[Chunk], overlap_chars: usize) -> String {
    let mut out = String::new();
    for (i, chunk) in chunks.iter().enumerate() {
        if i == 0 {
            out.push_str(&chunk.text);
        } else {
            out.extend(chunk.text.chars().skip(overlap_chars));
        }
    }
    out
}

fn window_spans(chars: &[char], cfg: ChunkConfig) -> Vec<(usize, usize)> {
    let n = chars.len();
    let mut spans = Vec::new();
    let mut start = 0;
    loop {
        let hard_end = (start + cfg.max_chunk_chars).min(n);
        if hard_end == n {
            spans.push((start, n));
            return spans;
        }
        // Ends must leave the next start past this one and should not produce
        // very short chunks.
        let min_end = (start + cfg.overlap_chars + 1).max(start + cfg.max_chunk_chars / 2);
        let end = pick_boundary(chars, min_end, hard_end).unwrap_or(hard_end);
        spans.push((start, end));
        start = end - cfg.overlap_chars;
    }
}

/// Largest `end` in `[min_end, hard_end]` at the best boundary tier.
fn pick_boundary(chars: &[char], min_end: usize, hard_end: usize) -> Option<usize> {
    if min_end > hard_end {
        return None;
    }
    let candidates = || (min_end..=hard_end).rev();
    candidates()
        .find(|&e| e >= 2 && chars[e - 1] == '\n' && chars[e - 2] == '\n')
        .or_else(|| candidates().find(|&e| is_sentence_end(chars, e)))
        .or_else(|| candidates().find(|&e| chars[e - 1].is_whitespace()))
}

fn is_sentence_end(chars: &[char], end: usize) -> bool {
    let prev = chars[end - 1];
    if matches!(prev, '。' | '！' | '？' | '；' | '\n') {
        return true;
    }
    // "word. Next" splits after the space
    end >= 2
        && chars[end - 1].is_whitespace()
        && matches!(chars[end - 2], '.' | '!' | '?' | ';')
}
