use std::sync::Arc;

use eartriage_core::diagnosis::{diagnose, DiagnosisConfig, DiagnosisOutcome, Detection, ImageMeta, MockDetector};
use eartriage_core::eval::{classification_report, group_means, AnswerSheet, Group, LabeledPrediction, Questionnaire};
use eartriage_core::knowledge::{Chunk, Embedder, HashNgramEmbedder, VectorIndex};
use eartriage_core::llm::{LlmGateway, MockGenerator, GenerationRequest};
use eartriage_core::locale::{Language, Locale};
use eartriage_core::router::{GateConfig, Router};
use eartriage_core::{collapse, BinaryClass, EarClass, Prompt, RoutePath};
use proptest::prelude::*;

fn class() -> impl Strategy<Value = EarClass> {
    (0usize..8).prop_map(|i| EarClass::ALL[i])
}

fn rt() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_current_thread().build().unwrap()
}

#[test]
fn collapse_partition_by_enumeration() {
    let normal = EarClass::ALL.iter().filter(|c| collapse(**c) == BinaryClass::NormalEar).count();
    let abnormal = EarClass::ALL.iter().filter(|c| collapse(**c) == BinaryClass::AbnormalEar).count();
    assert_eq!((normal, abnormal), (1, 7));
}

fn word_text() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec!["ear", "lop", "cup", "rim", "mold", "baby", "rain", "tax", "cat", "helix"]),
        1..6,
    )
    .prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binary_accuracy_dominates(pairs in prop::collection::vec((class(), class()), 1..100)) {
        let preds: Vec<_> = pairs.iter().enumerate().map(|(i, (t, p))| LabeledPrediction::new(i.to_string(), *t, *p)).collect();
        let r = classification_report(&preds).unwrap();
        prop_assert!(r.binary_accuracy >= r.categorical_accuracy);
        prop_assert!(r.binary_correct >= r.categorical_correct);
    }

    #[test]
    fn confusion_rows_sum_to_class_support(pairs in prop::collection::vec((class(), class()), 1..100)) {
        let preds: Vec<_> = pairs.iter().enumerate().map(|(i, (t, p))| LabeledPrediction::new(i.to_string(), *t, *p)).collect();
        let r = classification_report(&preds).unwrap();
        for c in EarClass::ALL {
            let support = pairs.iter().filter(|(t, _)| *t == c).count() as u64;
            prop_assert_eq!(r.confusion[c.index()].iter().sum::<u64>(), support);
        }
        prop_assert_eq!(r.binary_confusion.iter().flatten().sum::<u64>(), pairs.len() as u64);
    }

    #[test]
    fn identical_sheets_average_to_their_score(answers in prop::collection::vec(0usize..4, 5), copies in 1usize..20) {
        let q = Questionnaire::load(&std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/fixtures/eval/questionnaire.json")).unwrap();
        let labels: Vec<String> = answers.iter().map(|i| ["A", "B", "C", "D"][*i].to_string()).collect();
        let sheet = AnswerSheet { respondent_id: "r".into(), group: Group::Doctor, answers: labels };
        let single = eartriage_core::eval::score_sheet(&q, &sheet).unwrap();
        let sheets = vec![sheet; copies];
        let means = group_means(&q, &sheets).unwrap();
        prop_assert_eq!(means[&Group::Doctor].mean, single as f64);
    }

    #[test]
    fn search_with_large_k_returns_everything_sorted(texts in prop::collection::vec(word_text(), 1..40), q in word_text(), extra in 0usize..5) {
        let e = HashNgramEmbedder::new();
        let mut index = VectorIndex::new(0, e.descriptor());
        for (i, t) in texts.iter().enumerate() {
            index.insert(Chunk::new("doc", i as u64, t.clone()), e.embed_sync(t).unwrap()).unwrap();
        }
        let qv = e.embed_sync(&q).unwrap();
        let hits = index.search(&qv, texts.len() + extra).unwrap();
        prop_assert_eq!(hits.len(), texts.len());
        for w in hits.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].chunk.chunk_id < w[1].chunk.chunk_id));
        }
        prop_assert_eq!(hits, index.search(&qv, texts.len() + extra).unwrap());
    }

    #[test]
    fn routing_is_total_and_deterministic(text in "[a-zA-Z ?']{0,40}") {
        rt().block_on(async {
            let router = Router::new(Arc::new(HashNgramEmbedder::new()), GateConfig::packaged()).await.unwrap();
            match Prompt::text_only("s", text.clone()) {
                Ok(p) => {
                    let a = router.route(&p).await;
                    let b = router.route(&p).await;
                    let (a, b) = (a.unwrap(), b.unwrap());
                    prop_assert_eq!(&a, &b);
                    prop_assert!(a.path != RoutePath::ExpertDiagnosis);
                    if !text.chars().any(char::is_alphanumeric) {
                        prop_assert_eq!(a.path, RoutePath::Fallback);
                    }
                }
                Err(_) => prop_assert!(text.trim().is_empty()),
            }
            Ok(())
        })?;
    }

    #[test]
    fn diagnosis_binary_and_disclaimer(dets in prop::collection::vec((class(), 0.0f64..=1.0, 1.0f64..500.0), 0..5)) {
        let detections: Vec<Detection> = dets.iter().map(|(c, conf, side)| Detection::new([0.0, 0.0, *side, *side], *c, *conf)).collect();
        let meta = ImageMeta { width: 1080, height: 1440, channels: 3, media_type: "image/jpeg".into(), byte_len: 1 };
        let mock = MockDetector::new().with_default(detections.clone());
        let locale = Locale::packaged();
        let out = rt().block_on(diagnose(b"x", &meta, &mock, &DiagnosisConfig::default(), &locale, Language::En)).unwrap();
        match out {
            DiagnosisOutcome::Diagnosed(d) => {
                prop_assert_eq!(d.binary, collapse(d.primary_class));
                prop_assert!(d.render().contains(locale.get(Language::En, "disclaimer")));
                prop_assert!(d.confidence >= 0.7);
            }
            DiagnosisOutcome::NoEarFound => prop_assert!(detections.iter().all(|d| d.confidence < 0.7)),
        }
    }

    #[test]
    fn mock_generator_is_byte_deterministic(prompt in "\\PC{1,300}", zh in any::<bool>()) {
        prop_assume!(!prompt.trim().is_empty());
        let lang = if zh { Language::Zh } else { Language::En };
        let req = GenerationRequest::new(prompt, lang).unwrap();
        let gw = LlmGateway::mock();
        let a = rt().block_on(gw.generate(&req)).unwrap();
        let b = rt().block_on(gw.generate(&req)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a, MockGenerator::transcript(&req));
    }
}
