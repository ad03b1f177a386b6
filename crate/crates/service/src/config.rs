//! Service configuration: a TOML file plus a handful of environment
//! overrides. Every path it names must exist when the service starts.

use std::path::{Path, PathBuf};

use eartriage_core::locale::Language;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MAX_IMAGE_BYTES: usize = 10 * 1024 * 1024;
pub const DEFAULT_MAX_DOCUMENT_BYTES: usize = 32 * 1024 * 1024;

/// Environment variables read by [`ServiceConfig::apply_env`].
pub const ENV_LISTEN_ADDR: &str = "LISTEN_ADDR";
pub const ENV_ADMIN_TOKEN: &str = "ADMIN_TOKEN";
pub const ENV_DETECTOR_ENDPOINT: &str = "DETECTOR_ENDPOINT";
pub const ENV_EMBEDDER_ENDPOINT: &str = "EMBEDDER_ENDPOINT";
pub const ENV_GENERATOR_ENDPOINT: &str = "GENERATOR_ENDPOINT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{key} points at {path}, which does not exist")]
    MissingPath { key: &'static str, path: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    /// Base URL of the remote backend; the offline mock is used when unset.
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            timeout_ms: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub ignore_thresh: f64,
    /// Scripted replies for the mock detector; the packaged ones otherwise.
    pub mock_manifest: Option<PathBuf>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            timeout_ms: 10_000,
            ignore_thresh: eartriage_core::diagnosis::DEFAULT_IGNORE_THRESH,
            mock_manifest: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            timeout_ms: 30_000,
            max_in_flight: 8,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateSection {
    /// Gate JSON file; the packaged calibration otherwise.
    pub config: Option<PathBuf>,
    /// Overrides the threshold from the gate file.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnowledgeSection {
    pub k: usize,
    pub max_prompt_chars: usize,
    pub max_chunk_chars: usize,
    pub overlap_chars: usize,
    /// Prebuilt `.aidx` index. Takes precedence over the corpus options.
    pub index_path: Option<PathBuf>,
    /// Directory of `.md`/`.txt` documents to index at startup.
    pub corpus_dir: Option<PathBuf>,
    /// Index the packaged corpus when neither of the above is set.
    pub packaged_corpus: bool,
    pub template_en: Option<PathBuf>,
    pub template_zh: Option<PathBuf>,
}

impl Default for KnowledgeSection {
    fn default() -> Self {
        let k = eartriage_core::knowledge::KnowledgeConfig::default();
        Self {
            k: k.k,
            max_prompt_chars: k.max_prompt_chars,
            max_chunk_chars: k.chunk.max_chunk_chars,
            overlap_chars: k.chunk.overlap_chars,
            index_path: None,
            corpus_dir: None,
            packaged_corpus: true,
            template_en: None,
            template_zh: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSection {
    pub ttl_secs: u64,
    /// Append-only JSONL transcript of every successful turn.
    pub transcript: Option<PathBuf>,
}

impl Default for SessionSection {
    fn default() -> Self {
        Self {
            ttl_secs: 3600,
            transcript: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen_addr: String,
    /// Bearer token for the admin endpoints. Unset disables them.
    pub admin_token: Option<String>,
    pub max_image_bytes: usize,
    pub max_document_bytes: usize,
    pub default_language: Language,
    pub locale: Option<PathBuf>,
    pub detector: DetectorConfig,
    pub embedder: BackendConfig,
    pub generator: GeneratorConfig,
    pub gate: GateSection,
    pub knowledge: KnowledgeSection,
    pub sessions: SessionSection,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen_addr: "127.0.0.1:8080".into(),
            admin_token: None,
            max_image_bytes: DEFAULT_MAX_IMAGE_BYTES,
            max_document_bytes: DEFAULT_MAX_DOCUMENT_BYTES,
            default_language: Language::En,
            locale: None,
            detector: DetectorConfig::default(),
            embedder: BackendConfig::default(),
            generator: GeneratorConfig::default(),
            gate: GateSection::default(),
            knowledge: KnowledgeSection::default(),
            sessions: SessionSection::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path`, applies the process environment and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.apply_env(|k| std::env::var(k).ok());
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overrides fields from `LISTEN_ADDR`, `ADMIN_TOKEN` and the three
    /// `*_ENDPOINT` variables. Empty values are ignored.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        let get = |k| get(k).filter(|v: &String| !v.trim().is_empty());
        if let Some(v) = get(ENV_LISTEN_ADDR) {
            self.listen_addr = v;
        }
        if let Some(v) = get(ENV_ADMIN_TOKEN) {
            self.admin_token = Some(v);
        }
        if let Some(v) = get(ENV_DETECTOR_ENDPOINT) {
            self.detector.endpoint = Some(v);
        }
        if let Some(v) = get(ENV_EMBEDDER_ENDPOINT) {
            self.embedder.endpoint = Some(v);
        }
        if let Some(v) = get(ENV_GENERATOR_ENDPOINT) {
            self.generator.endpoint = Some(v);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let files: [(&'static str, &Option<PathBuf>); 7] = [
            ("locale", &self.locale),
            ("detector.mock_manifest", &self.detector.mock_manifest),
            ("gate.config", &self.gate.config),
            ("knowledge.index_path", &self.knowledge.index_path),
            ("knowledge.corpus_dir", &self.knowledge.corpus_dir),
            ("knowledge.template_en", &self.knowledge.template_en),
            ("knowledge.template_zh", &self.knowledge.template_zh),
        ];
        for (key, path) in files {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(ConfigError::MissingPath {
                        key,
                        path: p.display().to_string(),
                    });
                }
            }
        }
        if let Some(t) = &self.sessions.transcript {
            let dir = t.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            if !dir.is_dir() {
                return Err(ConfigError::MissingPath {
                    key: "sessions.transcript",
                    path: dir.display().to_string(),
                });
            }
        }
        if self.knowledge.k == 0 {
            return Err(ConfigError::Invalid("knowledge.k must be at least 1".into()));
        }
        if self.knowledge.overlap_chars >= self.knowledge.max_chunk_chars {
            return Err(ConfigError::Invalid(
                "knowledge.overlap_chars must be smaller than knowledge.max_chunk_chars".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.detector.ignore_thresh) {
            return Err(ConfigError::Invalid("detector.ignore_thresh must lie in [0, 1]".into()));
        }
        if let Some(t) = self.gate.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(ConfigError::Invalid("gate.threshold must lie in [0, 1]".into()));
            }
        }
        if self.max_image_bytes == 0 {
            return Err(ConfigError::Invalid("max_image_bytes must be positive".into()));
        }
        if self.admin_token.as_deref().is_some_and(|t| t.trim().is_empty()) {
            return Err(ConfigError::Invalid("admin_token is empty".into()));
        }
        Ok(())
    }
}
