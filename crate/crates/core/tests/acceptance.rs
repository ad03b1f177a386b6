//! Acceptance suite. Runs every criterion with mock backends and prints one
//! `PASS` or `FAIL` line each; exits non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{fixture, oracle_cosine, WORDS};
use eartriage_core::diagnosis::{filter_detections, packaged_image, Detection, MockDetector};
use eartriage_core::eval::{
    classification_report, group_means, read_answer_sheets, read_labeled_prompts, read_predictions, routing_eval,
    Group, LabeledPrediction, Questionnaire,
};
use eartriage_core::knowledge::corpus;
use eartriage_core::knowledge::{build_index, Chunk, ChunkConfig, Embedder, HashNgramEmbedder, VectorIndex};
use eartriage_core::llm::LlmGateway;
use eartriage_core::locale::{Language, Locale};
use eartriage_core::router::{GateConfig, ImagePayload, Router};
use eartriage_core::{Agent, AgentConfig, EarClass, Prompt};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(started: Instant, limit: Duration) -> Result<(), String> {
    let took = started.elapsed();
    check(took < limit, format!("took {took:?}, limit {limit:?}"))
}

fn metric_pair() -> Outcome {
    let t = Instant::now();
    let preds = read_predictions(&fixture("eval/predictions_20.csv")).map_err(|e| e.to_string())?;
    let r = classification_report(&preds).map_err(|e| e.to_string())?;
    check(r.n == 20, format!("n = {}", r.n))?;
    check(r.categorical_accuracy == 0.75, format!("categorical {}", r.categorical_accuracy))?;
    check(r.binary_accuracy == 0.90, format!("binary {}", r.binary_accuracy))?;
    within(t, Duration::from_secs(1))?;
    Ok(format!("categorical {:.2}, binary {:.2} in {:?}", r.categorical_accuracy, r.binary_accuracy, t.elapsed()))
}

fn binary_dominance() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xea5);
    for set in 0..1000 {
        let n = rng.gen_range(1..=200);
        let preds: Vec<LabeledPrediction> = (0..n)
            .map(|i| {
                let t = EarClass::ALL[rng.gen_range(0..8)];
                let p = EarClass::ALL[rng.gen_range(0..8)];
                LabeledPrediction::new(format!("{i}"), t, p)
            })
            .collect();
        let r = classification_report(&preds).map_err(|e| e.to_string())?;
        check(
            r.binary_accuracy >= r.categorical_accuracy,
            format!("set {set}: binary {} < categorical {}", r.binary_accuracy, r.categorical_accuracy),
        )?;
    }
    Ok("1000 random sets, no exceptions".into())
}

fn questionnaire() -> Outcome {
    let t = Instant::now();
    let q = Questionnaire::load(&fixture("eval/questionnaire.json")).map_err(|e| e.to_string())?;
    let sheets = read_answer_sheets(&fixture("eval/answer_sheets.csv")).map_err(|e| e.to_string())?;
    let means = group_means(&q, &sheets).map_err(|e| e.to_string())?;
    let get = |g: Group| means.get(&g).map(|m| m.mean).unwrap_or(f64::NAN);
    let got = (get(Group::Doctor), get(Group::PlainLlm), get(Group::AgentUser));
    check(got == (5.0, 2.0, 4.5), format!("means {got:?}"))?;
    within(t, Duration::from_secs(1))?;
    Ok(format!("doctor {} / plain_llm {} / agent_user {} in {:?}", got.0, got.1, got.2, t.elapsed()))
}

async fn routing() -> Outcome {
    let prompts = read_labeled_prompts(&fixture("eval/routing_canonical.jsonl")).map_err(|e| e.to_string())?;
    check(prompts.len() == 3, format!("{} prompts", prompts.len()))?;
    let router = Router::new(Arc::new(HashNgramEmbedder::new()), GateConfig::packaged())
        .await
        .map_err(|e| e.to_string())?;
    let first = routing_eval(&router, &prompts).await;
    let second = routing_eval(&router, &prompts).await;
    check(first == second, "two runs disagree")?;
    check(first.is_diagonal() && first.correct() == 3, format!("matrix {:?}", first.matrix))?;
    Ok("3/3, identical across runs".into())
}

fn random_text(rng: &mut StdRng) -> String {
    let n = rng.gen_range(1..8);
    (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

/// Scores every stored vector with a plain loop, sorts the whole list and
/// takes the head.
fn full_scan(index: &VectorIndex, q: &[f64], k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = index
        .entries()
        .iter()
        .map(|e| {
            let mut dot = 0.0;
            for (a, b) in e.vector.values().iter().zip(q) {
                dot += a * b;
            }
            (e.chunk.chunk_id.clone(), dot)
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

async fn retrieval_oracle() -> Outcome {
    let t = Instant::now();
    let e = HashNgramEmbedder::new();
    let mut rng = StdRng::seed_from_u64(42);
    let mut queries = 0;
    for corpus_no in 0..100 {
        let n = rng.gen_range(1..=1000);
        let mut index = VectorIndex::new(0, e.descriptor());
        for i in 0..n {
            let text = random_text(&mut rng);
            let chunk = Chunk::new(format!("d{}", i % 13), i as u64, text.clone());
            index.insert(chunk, e.embed_sync(&text).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        }
        for _ in 0..3 {
            let k = rng.gen_range(1..=12);
            let q = random_text(&mut rng);
            let got = eartriage_core::knowledge::retrieve(&index, &e, &q, k).await.map_err(|e| e.to_string())?;
            let qv = e.embed_sync(&q).map_err(|e| e.to_string())?;
            let want = full_scan(&index, qv.values(), k);
            let got_pairs: Vec<(String, f64)> = got.iter().map(|h| (h.chunk.chunk_id.clone(), h.score)).collect();
            check(got_pairs == want, format!("corpus {corpus_no} query {q:?} k {k}"))?;
            for h in &got {
                let o = oracle_cosine(&q, &h.chunk.text);
                check((h.score - o).abs() < 1e-9, format!("score {} vs oracle {o}", h.score))?;
            }
            queries += 1;
        }
    }
    within(t, Duration::from_secs(60))?;
    Ok(format!("100 corpora, {queries} queries, all equal, {:?}", t.elapsed()))
}

fn threshold_filtering() -> Outcome {
    let det = |c: f64| Detection::new([0.0, 0.0, 10.0, 10.0], EarClass::CupEar, c);
    let boundary = [det(0.69), det(0.70), det(0.71)];
    let kept: Vec<f64> = filter_detections(&boundary, 0.7).iter().map(|d| d.confidence).collect();
    check(kept == vec![0.70, 0.71], format!("boundary kept {kept:?}"))?;

    let mut rng = StdRng::seed_from_u64(9);
    for case in 0..2000 {
        let n = rng.gen_range(0..30);
        let mut dets: Vec<Detection> = (0..n).map(|_| det(rng.gen_range(0.0..=1.0))).collect();
        dets.extend(boundary.iter().cloned());
        let f = filter_detections(&dets, 0.7);
        let expected: Vec<f64> = dets.iter().map(|d| d.confidence).filter(|c| *c >= 0.7).collect();
        let got: Vec<f64> = f.iter().map(|d| d.confidence).collect();
        check(got == expected, format!("case {case}: exact keep set"))?;
        check(filter_detections(&f, 0.7) == f, format!("case {case}: not idempotent"))?;
        let (a, b) = (rng.gen_range(0.0..=1.0f64), rng.gen_range(0.0..=1.0f64));
        let (lo, hi) = (a.min(b), a.max(b));
        let low = filter_detections(&dets, lo);
        let high = filter_detections(&dets, hi);
        check(
            high.len() <= low.len() && high.iter().all(|d| low.contains(d)),
            format!("case {case}: not monotone between {lo} and {hi}"),
        )?;
    }
    Ok("boundary 0.69/0.70/0.71 and 2000 random cases".into())
}

const KNOWLEDGE_QUESTIONS: &[&str] = &[
    "What is auricular deformity?",
    "How is lop ear deformity treated?",
    "Can ear molding fix a cup ear?",
    "What is cryptotia?",
    "Is microtia linked to hearing loss?",
    "When should ear molding start for newborns?",
    "新生儿耳朵畸形怎么矫正",
    "What is Stahl's ear?",
];

const OFF_TOPIC: &[&str] = &[
    "My ear is not pretty.",
    "What's the weather tomorrow?",
    "Recommend a pasta recipe",
    "Tell me a joke",
    "How do I reset my password?",
    "今天天气怎么样",
];

fn random_detections(rng: &mut StdRng, w: f64, h: f64) -> Vec<Detection> {
    (0..rng.gen_range(0..4))
        .map(|_| {
            let x0 = rng.gen_range(0.0..w / 2.0);
            let y0 = rng.gen_range(0.0..h / 2.0);
            let x1 = rng.gen_range(x0 + 1.0..=w);
            let y1 = rng.gen_range(y0 + 1.0..=h);
            let class = EarClass::ALL[rng.gen_range(0..8)];
            let conf: f64 = if rng.gen_bool(0.3) {
                [0.69, 0.7, 0.71][rng.gen_range(0..3)]
            } else {
                rng.gen_range(0.0..=1.0)
            };
            Detection::new([x0, y0, x1, y1], class, conf)
        })
        .collect()
}

async fn response_contract() -> Outcome {
    let embedder: Arc<dyn Embedder> = Arc::new(HashNgramEmbedder::new());
    let index = build_index(embedder.as_ref(), &corpus::packaged(), ChunkConfig::default())
        .await
        .map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(2024);
    let images = [("ear_lop.jpg", 1080.0, 1440.0), ("ear_normal.jpg", 1080.0, 1440.0), ("robot.png", 640.0, 480.0)];
    let mut routes = BTreeSet::new();
    for chat in 0..200 {
        let (name, w, h) = images[rng.gen_range(0..images.len())];
        let bytes = packaged_image(name).unwrap_or_default().to_vec();
        let detector = MockDetector::new().with_image(&bytes, random_detections(&mut rng, w, h));
        let agent = Agent::new(
            embedder.clone(),
            Arc::new(detector),
            LlmGateway::mock(),
            index.clone(),
            GateConfig::packaged(),
            Locale::packaged(),
            AgentConfig::default(),
        )
        .await
        .map_err(|e| e.to_string())?;
        let (text, image) = match rng.gen_range(0..3) {
            0 => (
                rng.gen_bool(0.3).then(|| OFF_TOPIC[rng.gen_range(0..OFF_TOPIC.len())].to_string()),
                Some(ImagePayload {
                    bytes,
                    media_type: if rng.gen_bool(0.5) { "application/octet-stream".into() } else { String::new() },
                }),
            ),
            1 => (Some(KNOWLEDGE_QUESTIONS[rng.gen_range(0..KNOWLEDGE_QUESTIONS.len())].to_string()), None),
            _ => (Some(OFF_TOPIC[rng.gen_range(0..OFF_TOPIC.len())].to_string()), None),
        };
        let lang = [None, Some(Language::En), Some(Language::Zh)][rng.gen_range(0..3)];
        let prompt = Prompt::new(format!("chat-{chat}"), text, image).map_err(|e| e.to_string())?;
        let turn = agent.handle(&prompt, lang).await.map_err(|e| format!("chat {chat}: {e}"))?;
        turn.response
            .validate()
            .map_err(|v| format!("chat {chat}: {v} ({:?})", turn.response.route))?;
        routes.insert(turn.response.route.as_str());
    }
    check(routes.len() == 3, format!("only saw routes {routes:?}"))?;
    Ok("200/200 responses satisfy the route invariants".into())
}

async fn persistence() -> Outcome {
    let e = HashNgramEmbedder::new();
    let index = build_index(&e, &corpus::packaged(), ChunkConfig::default()).await.map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("kb.aidx");
    index.save(&path).map_err(|e| e.to_string())?;
    let loaded = VectorIndex::load(&path).map_err(|e| e.to_string())?;
    let topics = ["lop ear", "cup ear", "Stahl's ear", "cryptotia", "microtia", "helical rim", "constricted ear", "ear molding", "hearing", "耳廓畸形"];
    let frames = ["What is {}?", "How is {} treated?", "{} in newborns", "Does {} resolve on its own?", "photo of {}"];
    let mut n = 0;
    for topic in topics {
        for frame in frames {
            let q = frame.replace("{}", topic);
            let a = eartriage_core::knowledge::retrieve(&index, &e, &q, 6).await.map_err(|e| e.to_string())?;
            let b = eartriage_core::knowledge::retrieve(&loaded, &e, &q, 6).await.map_err(|e| e.to_string())?;
            check(a.len() == b.len(), format!("{q:?}: lengths differ"))?;
            for (x, y) in a.iter().zip(&b) {
                check(x.chunk == y.chunk, format!("{q:?}: chunk order differs"))?;
                check((x.score - y.score).abs() <= 1e-9, format!("{q:?}: {} vs {}", x.score, y.score))?;
            }
            n += 1;
        }
    }
    check(n == 50, format!("{n} queries"))?;
    Ok(format!("{n} queries, scores within 1e-9 after save/load"))
}

fn main() {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().expect("runtime");
    let results: Vec<(&str, Outcome)> = vec![
        ("metric-pair fixture", metric_pair()),
        ("binary-dominance property", binary_dominance()),
        ("questionnaire reproduction", questionnaire()),
        ("routing fixture", rt.block_on(routing())),
        ("retrieval oracle equivalence", rt.block_on(retrieval_oracle())),
        ("threshold filtering", threshold_filtering()),
        ("response-contract validator", rt.block_on(response_contract())),
        ("persistence round-trip", rt.block_on(persistence())),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
