//! Dispatch of a prompt to diagnosis, knowledge or fallback.
//!
//! Image prompts always go to diagnosis. Text prompts pass a relevance gate:
//! the best cosine similarity between the text and a set of topic anchor
//! queries, compared with a threshold.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::embed::{EmbedError, Embedder, EmbeddingVector};

pub const DEFAULT_GATE_THRESHOLD: f64 = 0.35;
const PACKAGED_GATE: &str = include_str!("../data/gate.json");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RouteError {
    #[error("prompt has neither text nor image")]
    EmptyPrompt,
    #[error("relevance gate embedder failed: {0}")]
    EmbedderFailure(#[from] EmbedError),
    #[error("invalid gate config: {0}")]
    InvalidGateConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePayload {
    #[serde(skip)]
    pub bytes: Vec<u8>,
    pub media_type: String,
}

/// One user turn. At least one of text and image is present; whitespace-only
/// text counts as absent.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    session_id: String,
    text: Option<String>,
    image: Option<ImagePayload>,
    received_at: DateTime<Utc>,
}

impl Prompt {
    pub fn new(
        session_id: impl Into<String>,
        text: Option<String>,
        image: Option<ImagePayload>,
    ) -> Result<Self, RouteError> {
        let text = text.filter(|t| !t.trim().is_empty());
        if text.is_none() && image.is_none() {
            return Err(RouteError::EmptyPrompt);
        }
        Ok(Self {
            session_id: session_id.into(),
            text,
            image,
            received_at: Utc::now(),
        })
    }

    pub fn text_only(session_id: impl Into<String>, text: impl Into<String>) -> Result<Self, RouteError> {
        Self::new(session_id, Some(text.into()), None)
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn text(&self) -> Option<&str> {
        self.text.as_deref()
    }

    pub fn image(&self) -> Option<&ImagePayload> {
        self.image.as_ref()
    }

    pub fn received_at(&self) -> DateTime<Utc> {
        self.received_at
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Image,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutePath {
    ExpertDiagnosis,
    ExpertKnowledge,
    Fallback,
}

impl RoutePath {
    pub const ALL: [RoutePath; 3] = [RoutePath::ExpertDiagnosis, RoutePath::ExpertKnowledge, RoutePath::Fallback];

    pub fn as_str(self) -> &'static str {
        match self {
            RoutePath::ExpertDiagnosis => "expert_diagnosis",
            RoutePath::ExpertKnowledge => "expert_knowledge",
            RoutePath::Fallback => "fallback",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for RoutePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonCode {
    ImagePrompt,
    TextRelevant,
    TextIrrelevant,
}

impl ReasonCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReasonCode::ImagePrompt => "image_prompt",
            ReasonCode::TextRelevant => "text_relevant",
            ReasonCode::TextIrrelevant => "text_irrelevant",
        }
    }
}

impl fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteDecision {
    pub path: RoutePath,
    /// Present iff the text relevance gate ran.
    pub relevance_score: Option<f64>,
    pub reason: ReasonCode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub threshold: f64,
    pub anchor_queries: Vec<String>,
}

impl GateConfig {
    pub fn new(threshold: f64, anchor_queries: Vec<String>) -> Result<Self, RouteError> {
        let cfg = Self {
            threshold,
            anchor_queries,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RouteError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(RouteError::InvalidGateConfig(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        if self.anchor_queries.is_empty() || self.anchor_queries.iter().any(|a| a.trim().is_empty()) {
            return Err(RouteError::InvalidGateConfig("anchor_queries must be non-empty strings".into()));
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self, RouteError> {
        let cfg: GateConfig = serde_json::from_str(json).map_err(|e| RouteError::InvalidGateConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RouteError> {
        let json = std::fs::read_to_string(path)
            .map_err(|e| RouteError::InvalidGateConfig(format!("{}: {e}", path.display())))?;
        Self::from_json(&json)
    }

    /// Gate calibrated for the hash-ngram embedder.
    pub fn packaged() -> Self {
        Self::from_json(PACKAGED_GATE).expect("packaged gate config is valid")
    }
}

impl Default for GateConfig {
    fn default() -> Self {
        Self::packaged()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub relevant: bool,
    pub score: f64,
}

pub fn classify_modality(p: &Prompt) -> Result<Modality, RouteError> {
    match (p.image.is_some(), p.text.is_some()) {
        (true, _) => Ok(Modality::Image),
        (false, true) => Ok(Modality::Text),
        (false, false) => Err(RouteError::EmptyPrompt),
    }
}

fn gate_score(query: &EmbeddingVector, anchors: &[EmbeddingVector]) -> f64 {
    anchors
        .iter()
        .map(|a| query.cosine(a))
        .fold(0.0f64, f64::max)
        .clamp(0.0, 1.0)
}

/// `score` is the largest cosine between `text` and any anchor, clamped to
/// `[0, 1]`; `relevant` is `score >= threshold`. Text the embedder finds
/// nothing to embed in scores 0.
pub async fn relevance_gate(text: &str, embedder: &dyn Embedder, cfg: &GateConfig) -> Result<GateOutcome, RouteError> {
    let anchors = embedder.embed_batch(&cfg.anchor_queries).await?;
    let score = match embedder.embed(text).await {
        Ok(query) => gate_score(&query, &anchors),
        Err(EmbedError::EmptyText) => 0.0,
        Err(e) => return Err(e.into()),
    };
    Ok(GateOutcome {
        relevant: score >= cfg.threshold,
        score,
    })
}

/// Router with the anchor embeddings computed once.
#[derive(Clone)]
pub struct Router {
    embedder: Arc<dyn Embedder>,
    cfg: GateConfig,
    anchors: Arc<Vec<EmbeddingVector>>,
}

impl Router {
    pub async fn new(embedder: Arc<dyn Embedder>, cfg: GateConfig) -> Result<Self, RouteError> {
        cfg.validate()?;
        let anchors = embedder.embed_batch(&cfg.anchor_queries).await?;
        Ok(Self {
            embedder,
            cfg,
            anchors: Arc::new(anchors),
        })
    }

    pub fn config(&self) -> &GateConfig {
        &self.cfg
    }

    pub async fn gate(&self, text: &str) -> Result<GateOutcome, RouteError> {
        let score = match self.embedder.embed(text).await {
            Ok(query) => gate_score(&query, &self.anchors),
            Err(EmbedError::EmptyText) => 0.0,
            Err(e) => return Err(e.into()),
        };
        Ok(GateOutcome {
            relevant: score >= self.cfg.threshold,
            score,
        })
    }

    pub async fn route(&self, p: &Prompt) -> Result<RouteDecision, RouteError> {
        let decision = match classify_modality(p)? {
            Modality::Image => RouteDecision {
                path: RoutePath::ExpertDiagnosis,
                relevance_score: None,
                reason: ReasonCode::ImagePrompt,
            },
            Modality::Text => {
                let gate = self.gate(p.text().unwrap_or_default()).await?;
                let (path, reason) = if gate.relevant {
                    (RoutePath::ExpertKnowledge, ReasonCode::TextRelevant)
                } else {
                    (RoutePath::Fallback, ReasonCode::TextIrrelevant)
                };
                RouteDecision {
                    path,
                    relevance_score: Some(gate.score),
                    reason,
                }
            }
        };
        tracing::info!(
            session = p.session_id(),
            route = %decision.path,
            reason = %decision.reason,
            score = decision.relevance_score,
            "prompt routed"
        );
        Ok(decision)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::embed::HashNgramEmbedder;
    use proptest::prelude::*;

    fn jpeg() -> ImagePayload {
        ImagePayload {
            bytes: vec![0xFF, 0xD8, 0xFF],
            media_type: "image/jpeg".into(),
        }
    }

    async fn router() -> Router {
        Router::new(Arc::new(HashNgramEmbedder::new()), GateConfig::packaged())
            .await
            .unwrap()
    }

    #[test]
    fn prompt_requires_text_or_image() {
        assert_eq!(Prompt::new("s", None, None), Err(RouteError::EmptyPrompt));
        assert_eq!(Prompt::new("s", Some("   ".into()), None), Err(RouteError::EmptyPrompt));
        assert!(Prompt::new("s", None, Some(jpeg())).is_ok());
    }

    #[test]
    fn modality_precedence() {
        let img = Prompt::new("s", None, Some(jpeg())).unwrap();
        assert_eq!(classify_modality(&img).unwrap(), Modality::Image);
        let text = Prompt::text_only("s", "What is auricular deformity?").unwrap();
        assert_eq!(classify_modality(&text).unwrap(), Modality::Text);
        let both = Prompt::new("s", Some("look".into()), Some(jpeg())).unwrap();
        assert_eq!(classify_modality(&both).unwrap(), Modality::Image);
    }

    #[test]
    fn gate_config_validation() {
        assert!(GateConfig::new(1.2, vec!["a".into()]).is_err());
        assert!(GateConfig::new(0.5, vec![]).is_err());
        assert!(GateConfig::new(0.5, vec!["".into()]).is_err());
        assert_eq!(GateConfig::packaged().threshold, DEFAULT_GATE_THRESHOLD);
    }

    #[tokio::test]
    async fn anchor_text_scores_one() {
        let e = HashNgramEmbedder::new();
        let cfg = GateConfig::packaged();
        let out = relevance_gate(&cfg.anchor_queries[0], &e, &cfg).await.unwrap();
        assert!((out.score - 1.0).abs() < 1e-9);
        assert!(out.relevant);
    }

    #[tokio::test]
    async fn canonical_prompts_route_as_expected() {
        let r = router().await;
        let img = r.route(&Prompt::new("s", None, Some(jpeg())).unwrap()).await.unwrap();
        assert_eq!((img.path, img.reason, img.relevance_score), (RoutePath::ExpertDiagnosis, ReasonCode::ImagePrompt, None));
        let q = r.route(&Prompt::text_only("s", "What is auricular deformity?").unwrap()).await.unwrap();
        assert_eq!(q.path, RoutePath::ExpertKnowledge);
        assert_eq!(q.reason, ReasonCode::TextRelevant);
        let f = r.route(&Prompt::text_only("s", "My ear is not pretty.").unwrap()).await.unwrap();
        assert_eq!(f.path, RoutePath::Fallback);
        assert_eq!(f.reason, ReasonCode::TextIrrelevant);
        assert!(f.relevance_score.unwrap() < DEFAULT_GATE_THRESHOLD);
    }

    #[tokio::test]
    async fn text_without_words_falls_back() {
        let r = router().await;
        let d = r.route(&Prompt::text_only("s", "?!? ...").unwrap()).await.unwrap();
        assert_eq!(d.path, RoutePath::Fallback);
        assert_eq!(d.relevance_score, Some(0.0));
    }

    #[tokio::test]
    async fn router_matches_free_gate() {
        let e = HashNgramEmbedder::new();
        let r = router().await;
        for q in ["cup ear treatment", "weather today", "耳朵畸形怎么办"] {
            assert_eq!(r.gate(q).await.unwrap(), relevance_gate(q, &e, r.config()).await.unwrap());
        }
    }

    proptest! {
        #[test]
        fn raising_threshold_never_promotes_to_knowledge(
            text in "[a-z ]{1,60}",
            t1 in 0.0f64..=1.0,
            t2 in 0.0f64..=1.0,
        ) {
            prop_assume!(!text.trim().is_empty());
            let rt = tokio::runtime::Builder::new_current_thread().build().unwrap();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let e: Arc<dyn Embedder> = Arc::new(HashNgramEmbedder::new());
            let anchors = GateConfig::packaged().anchor_queries;
            let low = rt.block_on(async {
                let r = Router::new(e.clone(), GateConfig::new(lo, anchors.clone()).unwrap()).await.unwrap();
                r.route(&Prompt::text_only("s", text.clone()).unwrap()).await.unwrap()
            });
            let high = rt.block_on(async {
                let r = Router::new(e.clone(), GateConfig::new(hi, anchors.clone()).unwrap()).await.unwrap();
                r.route(&Prompt::text_only("s", text.clone()).unwrap()).await.unwrap()
            });
            prop_assert_eq!(low.relevance_score, high.relevance_score);
            if low.path == RoutePath::Fallback {
                prop_assert_eq!(high.path, RoutePath::Fallback);
            }
        }
    }
}
