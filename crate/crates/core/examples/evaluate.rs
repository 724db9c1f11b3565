//! Held-out evaluation: macro-F1 with a bootstrap interval against the
//! majority baseline, MAE and Spearman for the regressor, and a
//! single-group ablation.
//!
//!     cargo run --release --example evaluate

use clifs::cli::{Context, RunConfig};
use clifs::corpus::{split, SplitSpec};
use clifs::eval::{
    ablate, classification_report, majority_baseline, regression_report, single_group_drops, AblationData,
    BootstrapSpec,
};
use clifs::models::grid::{fit_classifier, fit_regressor, HyperparameterGrid, TrainOptions, TrainParams};
use clifs::synth::fusion_corpus;

fn main() -> clifs::error::Result<()> {
    let mut cfg = RunConfig {
        stub: true,
        ..RunConfig::default()
    };
    cfg.features.embedding_dim = 16;
    let ctx = Context::new(cfg)?;
    let pipeline = ctx.pipeline()?;

    let parts = split(fusion_corpus(400, 5)?, &SplitSpec::new(0.8, 0.0, 0.2, 42)?)?;
    let rows = |ds: &[clifs::corpus::Document]| -> clifs::error::Result<Vec<Vec<f64>>> {
        Ok(pipeline.extract_batch(ds)?.into_iter().map(|e| e.features.values).collect())
    };
    let (xtr, xte) = (rows(&parts.train)?, rows(&parts.test)?);
    let ytr: Vec<_> = parts.train.iter().map(|d| d.label.expect("labelled")).collect();
    let yte: Vec<_> = parts.test.iter().map(|d| d.label.expect("labelled")).collect();

    let grid = HyperparameterGrid::single(TrainParams::default());
    let opts = TrainOptions::default();
    let boot = Some(BootstrapSpec {
        n_resamples: 1000,
        seed: 42,
    });

    let (clf, _) = fit_classifier(&xtr, &ytr, &grid, &opts)?;
    for r in [
        majority_baseline(&ytr, &yte, boot)?,
        classification_report("clifs_rf", &yte, &clf.predict_labels(&xte)?, boot)?,
    ] {
        let ci = r.bootstrap.expect("bootstrap requested");
        println!(
            "{:<10} macro-F1 {:.3}  95% CI [{:.3}, {:.3}]",
            r.name,
            r.macro_f1.unwrap_or(f64::NAN),
            ci.ci_low,
            ci.ci_high
        );
    }

    let s = |ds: &[clifs::corpus::Document]| ds.iter().map(|d| d.vifs_score.expect("scored")).collect::<Vec<_>>();
    let (reg, _) = fit_regressor(&xtr, &s(&parts.train), &grid, &opts)?;
    let r = regression_report("clifs_rf_reg", &s(&parts.test), &reg.predict_scores(&xte)?)?;
    println!("{:<10} MAE {:.3}  Spearman {:.3}", r.name, r.mae.unwrap_or(f64::NAN), r.spearman.map_or(f64::NAN, |s| s.rs));

    let schema = pipeline.schema();
    let data = AblationData {
        schema: &schema,
        train_rows: &xtr,
        train_labels: &ytr,
        test_rows: &xte,
        test_labels: &yte,
    };
    let report = ablate(&data, &single_group_drops(&schema), |x, y, t| {
        fit_classifier(x, y, &grid, &opts)?.0.predict_labels(t)
    })?;
    println!("ablation (full {:.3}):", report.full_macro_f1);
    for row in &report.rows {
        println!("  without {:?}: {:.3} ({:+.3})", row.dropped, row.macro_f1, row.delta);
    }
    Ok(())
}
