//! Retrieval prompt templates and prompt assembly.

use std::cmp::Ordering;
use std::path::Path;

use thiserror::Error;

use super::index::ScoredChunk;
use crate::locale::Language;

pub const QUERY_PLACEHOLDER: &str = "{query}";
pub const CONTEXTS_PLACEHOLDER: &str = "{contexts}";
pub const DEFAULT_MAX_PROMPT_CHARS: usize = 6000;

const PACKAGED_EN: &str = include_str!("../../data/templates/knowledge_en.txt");
const PACKAGED_ZH: &str = include_str!("../../data/templates/knowledge_zh.txt");

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template must contain {placeholder} exactly once, found {count}")]
    TemplateMalformed { placeholder: &'static str, count: usize },
    #[error("reading template {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// A template with exactly one `{query}` and one `{contexts}` placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
    language: Language,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>, language: Language) -> Result<Self, TemplateError> {
        let text = text.into();
        for placeholder in [QUERY_PLACEHOLDER, CONTEXTS_PLACEHOLDER] {
            let count = text.matches(placeholder).count();
            if count != 1 {
                return Err(TemplateError::TemplateMalformed { placeholder, count });
            }
        }
        Ok(Self { text, language })
    }

    pub fn from_file(path: &Path, language: Language) -> Result<Self, TemplateError> {
        let text = std::fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::new(text, language)
    }

    pub fn packaged(language: Language) -> Self {
        let text = match language {
            Language::En => PACKAGED_EN,
            Language::Zh => PACKAGED_ZH,
        };
        Self::new(text, language).expect("packaged template is well formed")
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Single-pass substitution; placeholder-like text inside the query or
    /// the contexts is left alone.
    fn render(&self, query: &str, contexts: &str) -> String {
        let (q, c) = (
            self.text.find(QUERY_PLACEHOLDER).expect("validated"),
            self.text.find(CONTEXTS_PLACEHOLDER).expect("validated"),
        );
        let mut parts = [(q, QUERY_PLACEHOLDER.len(), query), (c, CONTEXTS_PLACEHOLDER.len(), contexts)];
        parts.sort_by_key(|p| p.0);
        let mut out = String::with_capacity(self.text.len() + query.len() + contexts.len());
        let mut cursor = 0;
        for (pos, len, value) in parts {
            out.push_str(&self.text[cursor..pos]);
            out.push_str(value);
            cursor = pos + len;
        }
        out.push_str(&self.text[cursor..]);
        out
    }
}

fn render_context(rank: usize, c: &ScoredChunk) -> String {
    format!(
        "[{rank}] (source: {}#{})\n{}",
        c.chunk.source_doc, c.chunk.ordinal, c.chunk.text
    )
}

/// Fills the template with `query` and the contexts in descending score
/// order. While the result exceeds `max_prompt_chars` chars, the
/// lowest-scoring remaining context is dropped. The returned chunk id list
/// names the contexts that made it into the prompt.
pub fn assemble_prompt(
    template: &PromptTemplate,
    query: &str,
    contexts: &[ScoredChunk],
    max_prompt_chars: usize,
) -> (String, Vec<String>) {
    let mut ranked: Vec<&ScoredChunk> = contexts.iter().collect();
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.chunk.chunk_id.cmp(&b.chunk.chunk_id))
    });
    loop {
        let block = ranked
            .iter()
            .enumerate()
            .map(|(i, c)| render_context(i + 1, c))
            .collect::<Vec<_>>()
            .join("\n\n");
        let prompt = template.render(query, &block);
        if ranked.is_empty() || prompt.chars().count() <= max_prompt_chars {
            let used = ranked.iter().map(|c| c.chunk.chunk_id.clone()).collect();
            return (prompt, used);
        }
        ranked.pop();
    }
}
