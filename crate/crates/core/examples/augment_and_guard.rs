//! Round-trip translation, essay generation, minority oversampling, and
//! the leakage guard that fails closed on test-set descendants.
//!
//!     cargo run --example augment_and_guard

use std::collections::BTreeSet;

use clifs::augment::{
    build_generation_prompt, generate, oversample, rtt, rtt_batch, sample_target, AugmentedDataset, GenerationConfig,
    LeakageGuard, DEFAULT_PIVOTS,
};
use clifs::corpus::FusionLabel;
use clifs::stub::{EchoTranslator, ScriptedGenerator};
use clifs::synth::fusion_corpus;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> clifs::error::Result<()> {
    let docs = fusion_corpus(120, 2)?;
    let (train, test) = docs.split_at(100);
    let pivots: Vec<String> = DEFAULT_PIVOTS.iter().map(|s| s.to_string()).collect();
    let minority: BTreeSet<_> = [FusionLabel::Low, FusionLabel::High].into();

    let rtt_docs = rtt_batch(train, &EchoTranslator, &pivots, &minority, 4)?;

    let essay = "I stand with my team. ".repeat(20);
    let cfg = GenerationConfig {
        per_class: [2, 2, 2],
        ..GenerationConfig::default()
    };
    let genai = generate(train, &ScriptedGenerator::new([essay]), &cfg)?;

    let anchors: Vec<(f64, &str)> = train.iter().take(3).map(|d| (d.vifs_score.unwrap_or(4.0), d.text.as_str())).collect();
    let target = sample_target(&mut ChaCha8Rng::seed_from_u64(42));
    let prompt = build_generation_prompt(FusionLabel::High, 6.3, &anchors, &target)?;
    println!("generation prompt, first line: {}", prompt.lines().next().unwrap_or(""));

    let over = oversample(train, &minority, 0.25, 42)?;

    let mut records = train.to_vec();
    records.extend(rtt_docs);
    records.extend(genai);
    records.extend(over);
    let pool = AugmentedDataset::new(records);
    pool.validate_lineage()?;
    for ((label, prov), n) in pool.histogram() {
        println!("{label:>6} {prov:?}: {n}");
    }

    let guard = LeakageGuard::default();
    guard.check(&pool.records, test)?;
    println!("clean pool passes the guard");

    let mut leaky = pool.records.clone();
    leaky.extend(rtt(&test[0], &EchoTranslator, &pivots));
    match guard.check(&leaky, test) {
        Ok(()) => println!("guard missed a leak"),
        Err(e) => println!("rejected: {e}"),
    }
    let (kept, removed) = guard.exclude(leaky, test);
    println!("exclude kept {} and removed {}", kept.len(), removed.len());
    Ok(())
}
