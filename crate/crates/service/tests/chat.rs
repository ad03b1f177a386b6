mod common;

use std::sync::Arc;

use axum::http::StatusCode;
use common::*;
use eartriage_core::diagnosis::{HttpDetector, MockDetector};
use eartriage_core::llm::{HttpGenerator, LlmGateway, RetryPolicy};
use eartriage_core::locale::{Language, Locale};
use eartriage_core::{AgentResponse, EarClass, RoutePath};
use eartriage_service::{ChatReply, Limits, SessionStore, AppState};
use serde_json::Value;

fn reply(v: &Value) -> ChatReply {
    serde_json::from_value(v.clone()).unwrap()
}

fn ear_image(name: &'static str) -> Part<'static> {
    Part::File {
        name: "image",
        file_name: name,
        content_type: Some(if name.ends_with(".png") { "image/png" } else { "image/jpeg" }),
        bytes: image(name),
    }
}

#[tokio::test]
async fn ear_photo_gets_a_diagnosis_with_disclaimer() {
    let state = mock_state().await;
    let (status, body) = send(&state, chat_request(&[ear_image("ear_lop.jpg")])).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let r = reply(&body);
    assert_eq!(r.response.route, RoutePath::ExpertDiagnosis);
    assert!(r.response.disclaimer_included);
    assert!(r.response.text.contains(Locale::packaged().get(Language::En, "disclaimer")));
    let d = r.response.diagnosis.as_ref().unwrap();
    assert_eq!(d.primary_class, EarClass::LopEar);
    assert_eq!(d.confidence, 0.92);
    assert_eq!(body["route"], "expert_diagnosis");
    assert_eq!(body["reason"], "image_prompt");
    r.response.validate().unwrap();
}

#[tokio::test]
async fn knowledge_question_carries_provenance() {
    let state = mock_state().await;
    let (status, body) = send(&state, chat_request(&[Part::Text("text", "What is auricular deformity?")])).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let r = reply(&body);
    assert_eq!(r.response.route, RoutePath::ExpertKnowledge);
    assert!(!r.response.provenance.is_empty());
    assert!(r.relevance_score.unwrap() >= 0.35);
    r.response.validate().unwrap();
}

#[tokio::test]
async fn off_topic_and_non_ear_images_fall_back() {
    let state = mock_state().await;
    let (_, body) = send(&state, chat_request(&[Part::Text("text", "My ear is not pretty.")])).await;
    let r = reply(&body);
    assert_eq!(r.response.route, RoutePath::Fallback);
    assert!(r.response.provenance.is_empty() && r.response.diagnosis.is_none());

    let (status, body) = send(&state, chat_request(&[ear_image("robot.png")])).await;
    assert_eq!(status, StatusCode::OK);
    let r = reply(&body);
    assert_eq!(r.response.route, RoutePath::Fallback);
    assert_eq!(r.response.text, Locale::packaged().get(Language::En, "irrelevant_image"));
}

#[tokio::test]
async fn chinese_request_gets_chinese_strings() {
    let state = mock_state().await;
    let (status, body) = send(&state, chat_request(&[ear_image("ear_lop.jpg"), Part::Text("lang", "zh")])).await;
    assert_eq!(status, StatusCode::OK);
    let r = reply(&body);
    assert_eq!(r.language, Language::Zh);
    assert!(r.response.text.contains(Locale::packaged().get(Language::Zh, "disclaimer")));
}

#[tokio::test]
async fn client_errors() {
    let state = mock_state().await;
    let (status, body) = send(&state, chat_request(&[])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "empty_prompt");

    let (status, _) = send(&state, chat_request(&[Part::Text("text", "   ")])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let junk = Part::File {
        name: "image",
        file_name: "x.jpg",
        content_type: Some("image/jpeg"),
        bytes: b"not really a jpeg",
    };
    let (status, body) = send(&state, chat_request(&[junk])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "invalid_image");

    let (status, body) = send(&state, chat_request(&[Part::Text("text", "hi"), Part::Text("lang", "fr")])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "invalid_language");

    let not_multipart = axum::http::Request::post("/v1/chat")
        .header("content-type", "application/json")
        .body(axum::body::Body::from("{}"))
        .unwrap();
    let (status, _) = send(&state, not_multipart).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn oversized_images_are_rejected() {
    let agent = agent_with(Arc::new(MockDetector::packaged()), LlmGateway::mock(), packaged_index().await).await;
    let limits = Limits {
        max_image_bytes: 4096,
        ..Limits::default()
    };
    let state = AppState::new(agent, SessionStore::new(std::time::Duration::from_secs(60)), limits, None);
    let (status, body) = send(&state, chat_request(&[ear_image("ear_lop.jpg")])).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE, "{body}");

    let huge = vec![0u8; 4096 + 2 * 1024 * 1024];
    let part = Part::File {
        name: "image",
        file_name: "big.jpg",
        content_type: Some("image/jpeg"),
        bytes: &huge,
    };
    let (status, _) = send(&state, chat_request(&[part])).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn empty_index_answers_with_an_apology() {
    let embedder = eartriage_core::knowledge::HashNgramEmbedder::new();
    let empty = eartriage_core::knowledge::VectorIndex::new(0, eartriage_core::knowledge::Embedder::descriptor(&embedder));
    let state = state_with(agent_with(Arc::new(MockDetector::packaged()), LlmGateway::mock(), empty).await);
    let (status, body) = send(&state, chat_request(&[Part::Text("text", "What is auricular deformity?")])).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["error"]["code"], "knowledge_unavailable");
    assert_eq!(body["error"]["retryable"], false);
    assert_eq!(body["error"]["message"], Locale::packaged().get(Language::En, "knowledge_unavailable"));
}

#[tokio::test]
async fn unavailable_backends_are_retryable_503s() {
    let url = refused().await;
    let timeout = std::time::Duration::from_secs(2);
    let gateway = LlmGateway::new(
        Arc::new(HttpGenerator::new(url.clone(), timeout).unwrap()),
        2,
        RetryPolicy {
            base_backoff: std::time::Duration::from_millis(5),
            ..RetryPolicy::default()
        },
    );
    let detector = Arc::new(HttpDetector::new(url, timeout).unwrap());
    let state = state_with(agent_with(detector, gateway, packaged_index().await).await);

    let (status, body) = send(&state, chat_request(&[Part::Text("text", "My ear is not pretty.")])).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["error"]["code"], "backend_unavailable");
    assert_eq!(body["error"]["retryable"], true);

    let (status, body) = send(&state, chat_request(&[ear_image("ear_lop.jpg")])).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["error"]["retryable"], true);
    assert_eq!(state.sessions.len(), 0);
}

const SCRIPT: &[&str] = &[
    "image:ear_lop.jpg",
    "What is auricular deformity?",
    "My ear is not pretty.",
    "",
    "image:robot.png",
    "How is lop ear deformity treated?",
    "image:ear_normal.jpg",
    "新生儿耳朵畸形怎么矫正",
    "Tell me a joke",
    "?!",
];

async fn run_script(state: &AppState, session: &str) -> Vec<(StatusCode, Value)> {
    let mut out = Vec::new();
    for step in SCRIPT {
        let mut parts = vec![Part::Text("session_id", session)];
        match step.strip_prefix("image:") {
            Some(name) => parts.push(ear_image(name)),
            None => parts.push(Part::Text("text", step)),
        }
        out.push(send(state, chat_request(&parts)).await);
    }
    out
}

#[tokio::test]
async fn every_ok_reply_satisfies_the_route_contract() {
    let state = mock_state().await;
    for (status, body) in run_script(&state, "contract").await {
        if status == StatusCode::OK {
            let r: AgentResponse = serde_json::from_value(body.clone()).unwrap();
            r.validate().unwrap_or_else(|v| panic!("{v}: {body}"));
        } else {
            assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        }
    }
}

#[tokio::test]
async fn turn_count_tracks_successful_calls() {
    let state = mock_state().await;
    let results = run_script(&state, "counting").await;
    let ok = results.iter().filter(|(s, _)| *s == StatusCode::OK).count();
    assert_eq!(ok, SCRIPT.len() - 1);
    assert_eq!(state.sessions.turn_count("counting"), ok);
    let turns: Vec<u64> = results
        .iter()
        .filter(|(s, _)| *s == StatusCode::OK)
        .map(|(_, b)| b["turn"].as_u64().unwrap())
        .collect();
    assert_eq!(turns, (1..=ok as u64).collect::<Vec<_>>());
    let session = state.sessions.get("counting").unwrap();
    assert_eq!(session.turns[0].response.route, RoutePath::ExpertDiagnosis);
}

fn strip_latency(mut v: Value) -> Value {
    if let Some(o) = v.as_object_mut() {
        o.remove("latency_ms");
    }
    v
}

#[tokio::test]
async fn identical_sequences_give_identical_bodies() {
    let a = run_script(&mock_state().await, "det").await;
    let b = run_script(&mock_state().await, "det").await;
    assert_eq!(a.len(), b.len());
    for ((sa, ba), (sb, bb)) in a.into_iter().zip(b) {
        assert_eq!(sa, sb);
        assert_eq!(strip_latency(ba), strip_latency(bb));
    }
}

#[tokio::test]
async fn missing_session_id_gets_a_fresh_one() {
    let state = mock_state().await;
    let (_, a) = send(&state, chat_request(&[Part::Text("text", "hello")])).await;
    let (_, b) = send(&state, chat_request(&[Part::Text("text", "hello")])).await;
    assert_ne!(a["session_id"], b["session_id"]);
    assert_eq!(a["turn"], 1);
    assert_eq!(b["turn"], 1);
}
