//! In-memory chat sessions with idle expiry and an optional JSONL transcript.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use eartriage_core::router::ReasonCode;
use eartriage_core::AgentResponse;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSummary {
    pub text: Option<String>,
    pub image_media_type: Option<String>,
    pub image_bytes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub at: DateTime<Utc>,
    pub prompt: PromptSummary,
    pub reason: ReasonCode,
    pub response: AgentResponse,
}

#[derive(Debug, Clone, Serialize)]
pub struct Session {
    pub session_id: String,
    pub turns: Vec<Turn>,
    pub created_at: DateTime<Utc>,
    pub last_active: DateTime<Utc>,
    #[serde(skip)]
    touched: Instant,
}

#[derive(Serialize)]
struct TranscriptLine<'a> {
    session_id: &'a str,
    turn: usize,
    #[serde(flatten)]
    record: &'a Turn,
}

pub struct SessionStore {
    ttl: Duration,
    sessions: Mutex<HashMap<String, Session>>,
    transcript: Option<Mutex<BufWriter<File>>>,
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        Self {
            ttl,
            sessions: Mutex::new(HashMap::new()),
            transcript: None,
        }
    }

    /// Also appends every recorded turn to `path`, one JSON object per line.
    pub fn with_transcript(mut self, path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        self.transcript = Some(Mutex::new(BufWriter::new(file)));
        Ok(self)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, Session>> {
        self.sessions.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn evict(&self, map: &mut HashMap<String, Session>, now: Instant) {
        let before = map.len();
        map.retain(|_, s| now.duration_since(s.touched) < self.ttl);
        if map.len() < before {
            tracing::debug!(evicted = before - map.len(), "expired sessions evicted");
        }
    }

    /// Appends a turn, creating the session if needed, and returns the
    /// session's turn count afterwards.
    pub fn record(&self, session_id: &str, prompt: PromptSummary, reason: ReasonCode, response: &AgentResponse) -> usize {
        let now = Instant::now();
        let at = Utc::now();
        let turn = Turn {
            at,
            prompt,
            reason,
            response: response.clone(),
        };
        let count = {
            let mut map = self.lock();
            self.evict(&mut map, now);
            let session = map.entry(session_id.to_string()).or_insert_with(|| Session {
                session_id: session_id.to_string(),
                turns: Vec::new(),
                created_at: at,
                last_active: at,
                touched: now,
            });
            session.turns.push(turn.clone());
            session.last_active = at;
            session.touched = now;
            session.turns.len()
        };
        if let Some(t) = &self.transcript {
            let line = TranscriptLine {
                session_id,
                turn: count,
                record: &turn,
            };
            let mut w = t.lock().unwrap_or_else(|e| e.into_inner());
            let written = serde_json::to_writer(&mut *w, &line)
                .map_err(std::io::Error::from)
                .and_then(|_| w.write_all(b"\n"))
                .and_then(|_| w.flush());
            if let Err(e) = written {
                tracing::error!(error = %e, "transcript write failed");
            }
        }
        count
    }

    pub fn get(&self, session_id: &str) -> Option<Session> {
        let mut map = self.lock();
        self.evict(&mut map, Instant::now());
        map.get(session_id).cloned()
    }

    pub fn turn_count(&self, session_id: &str) -> usize {
        self.get(session_id).map_or(0, |s| s.turns.len())
    }

    pub fn len(&self) -> usize {
        let mut map = self.lock();
        self.evict(&mut map, Instant::now());
        map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
