//! Core of a triage assistant for newborn ear deformities.
//!
//! A [`router::Router`] sends each prompt down one of three paths: image
//! diagnosis through a pluggable detector ([`diagnosis`]), retrieval-augmented
//! answers over an embedded corpus ([`knowledge`]), or plain generation
//! ([`llm`]). [`agent::Agent`] wires them together; [`eval`] holds the
//! offline evaluation harness.

pub mod agent;
pub mod diagnosis;
pub mod eval;
mod http;
pub mod knowledge;
pub mod llm;
pub mod locale;
pub mod response;
pub mod router;
pub mod taxonomy;

pub use agent::{Agent, AgentConfig, AgentError, AgentTurn, IngestReport};
pub use response::{AgentResponse, Provenance};
pub use router::{Prompt, RouteDecision, RoutePath};
pub use taxonomy::{collapse, parse_class, BinaryClass, EarClass};
