#![cfg(feature = "onnx")]

use std::path::PathBuf;

use clifs::features::{EncoderClassifierRuntime, SentenceEncoderRuntime};
use clifs::mlm::{FusionScorer, MaskedLmRuntime, ScorerConfig};
use clifs::runtime::{ExportManifest, OnnxClassifier, OnnxMaskedLm, OnnxNer, OnnxSentenceEncoder};
use clifs::vocab::{detect_entities, EntityLabel, NerRuntime, SeedLists, Vocabularies};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/onnx").join(name)
}

fn manifest(name: &str) -> ExportManifest {
    ExportManifest::load(fixture(&format!("{name}.manifest.json"))).unwrap()
}

fn reference() -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixture("reference.json")).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn masked_lm_matches_source_distributions() {
    let mlm = OnnxMaskedLm::load(manifest("masked_lm")).unwrap();
    for case in reference()["masked_lm"].as_array().unwrap() {
        let text = case["text"].as_str().unwrap();
        let first = text.split(' ').next().unwrap().len();
        let seq = mlm.encode_masked(text, &[0..first]).unwrap();
        assert_eq!(seq.mask_positions, vec![0]);
        let got = &mlm.predict(&seq.ids, &seq.mask_positions).unwrap()[0];
        let want = floats(&case["probs"]);
        assert_eq!(got.len(), want.len());
        let dev = got.iter().zip(&want).map(|(a, b)| (*a as f64 - b).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-4, "{text}: max deviation {dev}");
        let ids: Vec<u32> = case["ids"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap() as u32).collect();
        assert_eq!(&ids[1..ids.len() - 1], &seq.ids[..]);
    }
}

#[test]
fn single_token_lookup() {
    let mlm = OnnxMaskedLm::load(manifest("masked_lm")).unwrap();
    assert!(mlm.single_token_id("team").is_some());
    assert!(mlm.single_token_id("my team").is_none());
    assert!(mlm.single_token_id("[MASK]").is_none());
}

#[test]
fn encoder_and_classifier_match_source() {
    let enc = OnnxSentenceEncoder::load(manifest("sentence_encoder")).unwrap();
    let clf = OnnxClassifier::load(manifest("classifier")).unwrap();
    let r = reference();
    for case in r["sentence_encoder"].as_array().unwrap() {
        let v = enc.encode(case["text"].as_str().unwrap()).unwrap();
        let want = floats(&case["vector"]);
        let cos: f64 = v.iter().zip(&want).map(|(a, b)| *a as f64 * b).sum();
        assert!(cos > 0.9999, "cosine {cos}");
        assert_eq!(v.len(), enc.dim());
    }
    for case in r["classifier"].as_array().unwrap() {
        let p = clf.class_probabilities(case["text"].as_str().unwrap()).unwrap();
        let want = floats(&case["probs"]);
        for (a, b) in p.iter().zip(&want) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}

#[test]
fn ner_merges_bio_tags_into_byte_spans() {
    let ner = OnnxNer::load(manifest("ner")).unwrap();
    let text = "acme corp and google are in london";
    let ents = ner.entities(text).unwrap();
    let found: Vec<(&str, &str)> = ents.iter().map(|e| (&text[e.start..e.end], e.label.as_str())).collect();
    assert_eq!(found, [("acme corp", "ORG"), ("google", "ORG"), ("london", "GPE")]);
    let kept = detect_entities(text, &ner, &[EntityLabel::Org].into_iter().collect()).unwrap();
    assert_eq!(kept.len(), 2);
}

#[test]
fn exported_models_score_a_probe_sentence() {
    let mlm = OnnxMaskedLm::load(manifest("masked_lm")).unwrap();
    let ner = OnnxNer::load(manifest("ner")).unwrap();
    let seeds = SeedLists::default().with_target_terms(["party"]);
    let vocab = Vocabularies::from_seeds(&seeds);
    let scorer = FusionScorer::new(&vocab, &mlm, Some(&ner), ScorerConfig::default()).unwrap();
    let m = scorer.score("i love my team and we stand with our family in london").unwrap();
    assert!(!m.flags.any(), "{m:?}");
    for x in [m.s_i_to_t, m.s_t_to_i, m.fusion_proximity, m.fictive_kinship] {
        assert!(x.is_finite() && x > 0.0);
    }
}

#[test]
fn wrong_role_is_rejected() {
    assert!(OnnxNer::load(manifest("masked_lm")).is_err());
}
