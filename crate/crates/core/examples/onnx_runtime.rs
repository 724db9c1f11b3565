//! Loads exported models from their manifests and scores text with them.
//!
//!     cargo run --example onnx_runtime -- path/to/masked_lm.manifest.json [ner.manifest.json]
//!
//! Without arguments it uses the tiny fixtures under tests/fixtures/onnx.

use std::path::PathBuf;

use clifs::mlm::{FusionScorer, ScorerConfig};
use clifs::runtime::{ExportManifest, OnnxMaskedLm, OnnxNer};
use clifs::vocab::{NerRuntime, SeedLists, Vocabularies};

fn main() -> clifs::error::Result<()> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/onnx");
    let mut args = std::env::args().skip(1);
    let mlm_path = args.next().map(PathBuf::from).unwrap_or_else(|| fixtures.join("masked_lm.manifest.json"));
    let ner_path = args.next().map(PathBuf::from).unwrap_or_else(|| fixtures.join("ner.manifest.json"));

    let manifest = ExportManifest::load(&mlm_path)?;
    println!(
        "{:?} from {}: vocab {}, hidden {}, max length {}",
        manifest.role, manifest.source_checkpoint, manifest.vocab_size, manifest.hidden_size, manifest.max_sequence_length
    );
    let mlm = OnnxMaskedLm::load(manifest)?;
    let ner = OnnxNer::load(ExportManifest::load(&ner_path)?)?;

    let text = "i love my team and we stand with our family in london";
    for e in ner.entities(text)? {
        println!("entity {:?} {}", &text[e.start..e.end], e.label);
    }

    let vocab = Vocabularies::from_seeds(&SeedLists::default());
    let scorer = FusionScorer::new(&vocab, &mlm, Some(&ner), ScorerConfig::default())?;
    let m = scorer.score(text)?;
    println!(
        "S(I->T) {:.4}  S(T->I) {:.4}  f {:.4}  K {:.4}",
        m.s_i_to_t, m.s_t_to_i, m.fusion_proximity, m.fictive_kinship
    );
    Ok(())
}
