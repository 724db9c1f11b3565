//! The violence-risk task: chunk multi-author documents, balance by
//! author round robin, add CLIFS features from a trained fusion classifier,
//! and compare against the index threshold and a forest on the index's own
//! categories.
//!
//!     cargo run --release --example risk_task

use clifs::cli::{Context, RunConfig};
use clifs::corpus::{chunk_document, class_counts, DEFAULT_CHUNK_WORDS};
use clifs::models::grid::{fit_classifier, HyperparameterGrid, TrainOptions, TrainParams};
use clifs::risk::{featurize_all, prepare, risk_feature_names, run_task, split_samples, RiskOptions};
use clifs::synth::{fusion_corpus, risk_corpus};
use clifs::text::RuleSegmenter;

fn main() -> clifs::error::Result<()> {
    let mut cfg = RunConfig {
        stub: true,
        ..RunConfig::default()
    };
    cfg.features.embedding_dim = 16;
    let ctx = Context::new(cfg)?;
    let pipeline = ctx.pipeline()?;
    let grid = HyperparameterGrid::single(TrainParams::default());

    let essays = fusion_corpus(300, 4)?;
    let x: Vec<Vec<f64>> = pipeline.extract_batch(&essays)?.into_iter().map(|e| e.features.values).collect();
    let y: Vec<_> = essays.iter().map(|d| d.label.expect("labelled")).collect();
    let (clifs_rf, _) = fit_classifier(&x, &y, &grid, &TrainOptions::default())?;

    let seg = RuleSegmenter::default();
    let mut chunks = Vec::new();
    for d in risk_corpus(5, 4, 7) {
        chunks.extend(chunk_document(&d, DEFAULT_CHUNK_WORDS, &seg)?);
    }
    println!("chunks per class before balancing: {:?}", class_counts(&chunks));
    let balanced = prepare(&chunks)?;
    println!("after: {:?}", class_counts(&balanced));

    println!("risk features: {:?}", risk_feature_names(&ctx.lexicons.vri));
    let samples = featurize_all(&balanced, &pipeline, &clifs_rf)?;
    let (train, test) = split_samples(samples, 42)?;
    let report = run_task(&train, &test, &grid, &RiskOptions::default())?;
    for row in &report.rows {
        println!("{:<14} macro-F1 {:.3}", row.name, row.macro_f1.unwrap_or(f64::NAN));
    }
    println!("{}", report.caveat);
    Ok(())
}
