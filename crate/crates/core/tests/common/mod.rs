//! Test-side reference implementations, written without touching the crate
//! internals they check.

#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/fixtures").join(rel)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 14695981039346656037;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(1099511628211);
    }
    h
}

/// Raw trigram bucket counts for `text`, built from trigram strings.
pub fn oracle_counts(text: &str) -> HashMap<usize, u64> {
    let mut norm = String::new();
    let mut last_space = true;
    for c in text.to_lowercase().chars() {
        if c.is_alphanumeric() {
            norm.push(c);
            last_space = false;
        } else if !last_space {
            norm.push(' ');
            last_space = true;
        }
    }
    let norm = norm.trim_end().to_string();
    let padded: Vec<char> = format!(" {norm} ").chars().collect();
    let mut counts = HashMap::new();
    for i in 0..padded.len().saturating_sub(2) {
        let gram: String = padded[i..i + 3].iter().collect();
        *counts.entry((fnv1a(gram.as_bytes()) % 256) as usize).or_insert(0) += 1;
    }
    counts
}

/// Cosine of two raw count vectors, dividing by both norms.
pub fn oracle_cosine(a: &str, b: &str) -> f64 {
    let ca = oracle_counts(a);
    let cb = oracle_counts(b);
    let dot: u64 = ca.iter().map(|(k, v)| v * cb.get(k).copied().unwrap_or(0)).sum();
    let na: u64 = ca.values().map(|v| v * v).sum();
    let nb: u64 = cb.values().map(|v| v * v).sum();
    if na == 0 || nb == 0 {
        return 0.0;
    }
    dot as f64 / ((na as f64).sqrt() * (nb as f64).sqrt())
}

/// Brute-force top-k: score everything, sort fully, take the head.
pub fn brute_top_k(scored: &[(String, f64)], k: usize) -> Vec<(String, f64)> {
    let mut all = scored.to_vec();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Small vocabulary so random corpora contain exact duplicates and ties.
pub const WORDS: &[&str] = &[
    "ear", "lop", "cup", "helix", "rim", "mold", "newborn", "fold", "crus", "concha", "tragus", "lobule",
    "stahl", "cryptotia", "microtia", "hearing", "splint", "week", "cartilage", "shape",
];
