//! Prints the cosine of each query against every packaged gate anchor.
//!
//!     cargo run -p eartriage-core --example gate_calibration -- "What is microtia?" "hello"

use eartriage_core::knowledge::HashNgramEmbedder;
use eartriage_core::router::GateConfig;

fn main() {
    let e = HashNgramEmbedder::new();
    let cfg = GateConfig::packaged();
    let anchors: Vec<_> = cfg.anchor_queries.iter().map(|a| e.embed_sync(a).unwrap()).collect();
    let queries: Vec<String> = std::env::args().skip(1).collect();
    for q in &queries {
        let v = e.embed_sync(q).unwrap();
        let scores: Vec<String> = anchors.iter().map(|a| format!("{:.3}", v.cosine(a))).collect();
        println!("{q:<45} {}", scores.join(" "));
    }
}
