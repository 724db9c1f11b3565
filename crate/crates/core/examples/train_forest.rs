//! Grid search with stratified 4-fold CV, refit, Gini importances, and a
//! save/load round trip.
//!
//!     cargo run --release --example train_forest

use clifs::cli::{Context, RunConfig};
use clifs::models::grid::{fit_classifier, fit_regressor, HyperparameterGrid, TrainOptions};
use clifs::models::persist::{load_model, save_model, ModelFile};
use clifs::models::scaler::ScalerKind;
use clifs::synth::fusion_corpus;

fn main() -> clifs::error::Result<()> {
    let mut cfg = RunConfig {
        stub: true,
        ..RunConfig::default()
    };
    cfg.features.embedding_dim = 16;
    let ctx = Context::new(cfg)?;
    let pipeline = ctx.pipeline()?;

    let docs = fusion_corpus(300, 3)?;
    let x: Vec<Vec<f64>> = pipeline.extract_batch(&docs)?.into_iter().map(|e| e.features.values).collect();
    let labels: Vec<_> = docs.iter().map(|d| d.label.expect("labelled")).collect();
    let scores: Vec<f64> = docs.iter().map(|d| d.vifs_score.expect("scored")).collect();

    // a slice of the full grid keeps this quick
    let grid = HyperparameterGrid {
        n_estimators: vec![50, 100],
        max_depth: vec![0, 10],
        min_samples_leaf: vec![1, 5],
        min_samples_split: vec![2],
        scaler: vec![ScalerKind::None, ScalerKind::Standardize],
    };
    let opts = TrainOptions::default();
    let (clf, cv) = fit_classifier(&x, &labels, &grid, &opts)?;
    let clf = clf.with_schema(pipeline.schema());
    println!("{} configurations, best {:?}", cv.entries.len(), cv.best().params);
    println!("CV macro-F1 {:.3} per fold {:?}", cv.best().mean, cv.best().fold_scores);
    println!("top features:");
    for (name, v) in clf.ranked_importances().iter().take(6) {
        println!("  {name:<20} {v:.3}");
    }

    let (_, rcv) = fit_regressor(&x, &scores, &grid, &opts)?;
    println!("regression CV MAE {:.3}", rcv.best().mean);

    let path = std::env::temp_dir().join("clifs_rf.json");
    save_model(&path, &ModelFile::new(clf.clone()))?;
    let back = load_model(&path)?;
    assert_eq!(back.model.predict_labels(&x)?, clf.predict_labels(&x)?);
    println!("saved and reloaded {}", path.display());
    Ok(())
}
