//! Violence-risk prediction on chunked manifesto-style corpora: the VRI
//! threshold rule, a forest on VRI category scores, and the CLIFS-VRI
//! forest where the fusion category is replaced by masked-LM metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{balance_round_robin, minority_size, split, Chunk, FusionLabel, RiskLabel, SplitSpec, DEFAULT_SEED};
use crate::error::{Error, Result};
use crate::eval::{classification_report, majority_baseline, EvalReport};
use crate::lexical::{vri_aggregate, VriCategoryScores, VriLexicons, VriResult};
use crate::mlm::FusionMetrics;
use crate::models::grid::{fit_classifier, ClassWeighting, HyperparameterGrid, TrainOptions};
use crate::models::FittedModel;
use crate::pipeline::FeaturePipeline;

pub const CLIFS_RISK_COLUMNS: [&str; 5] = ["fusion_proximity", "fictive_kinship", "s_i_to_t", "s_t_to_i", "clifs_class"];

pub const SPLIT_CAVEAT: &str =
    "chunks are split at random, so one author's chunks can fall on both sides of the split";

/// Column names of the VRI forest: all category lexicons then
/// `identification`.
pub fn vri_feature_names(lex: &VriLexicons) -> Vec<String> {
    lex.a
        .iter()
        .chain(&lex.b)
        .chain(&lex.c)
        .map(|l| l.name.clone())
        .chain(["identification".to_string()])
        .collect()
}

/// Column names of the CLIFS-VRI forest.
pub fn risk_feature_names(lex: &VriLexicons) -> Vec<String> {
    let mut names: Vec<String> = vri_feature_names(lex);
    names.remove(lex.fusion_index);
    names.extend(CLIFS_RISK_COLUMNS.iter().map(|s| s.to_string()));
    names
}

pub fn vri_features(vri: &VriCategoryScores) -> Vec<f64> {
    vri.categories().chain([vri.identification]).collect()
}

/// Eleven VRI categories (fusion removed), identification, the four
/// masked-LM metrics and the predicted fusion class as 0/1/2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskFeatureVector {
    pub values: Vec<f64>,
}

impl RiskFeatureVector {
    pub const LEN: usize = 17;

    pub fn new(
        vri: &VriCategoryScores,
        fusion_index: usize,
        metrics: &FusionMetrics,
        clifs_class: FusionLabel,
    ) -> Result<Self> {
        let mut values = vri_features(vri);
        if values.len() != 13 || fusion_index >= 12 {
            return Err(Error::usage(format!(
                "expected 12 VRI categories with the fusion category among them, got {} (fusion at {fusion_index})",
                values.len() - 1
            )));
        }
        values.remove(fusion_index);
        values.extend([
            metrics.fusion_proximity,
            metrics.fictive_kinship,
            metrics.s_i_to_t,
            metrics.s_t_to_i,
            clifs_class.index() as f64,
        ]);
        Ok(RiskFeatureVector { values })
    }
}

/// One featurized chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSample {
    pub id: String,
    pub label: RiskLabel,
    pub vri: VriCategoryScores,
    pub vri_result: VriResult,
    pub clifs: RiskFeatureVector,
}

impl RiskSample {
    pub fn new(
        id: impl Into<String>,
        label: RiskLabel,
        vri: VriCategoryScores,
        fusion_index: usize,
        metrics: &FusionMetrics,
        clifs_class: FusionLabel,
    ) -> Result<Self> {
        Ok(RiskSample {
            id: id.into(),
            label,
            vri_result: vri_aggregate(&vri)?,
            clifs: RiskFeatureVector::new(&vri, fusion_index, metrics, clifs_class)?,
            vri,
        })
    }
}

/// Downsamples every class to the minority size by author round robin.
pub fn prepare(chunks: &[Chunk]) -> Result<Vec<Chunk>> {
    if chunks.is_empty() {
        return Err(Error::usage("risk corpus has no chunks"));
    }
    balance_round_robin(chunks, minority_size(chunks))
}

/// `model` is a trained CLIFS classifier over the pipeline's layout.
pub fn featurize(chunk: &Chunk, pipeline: &FeaturePipeline<'_>, model: &FittedModel) -> Result<RiskSample> {
    let x = pipeline.extract(&chunk.text)?;
    let class = model.predict_labels(&[x.features.values])?[0];
    RiskSample::new(
        chunk.id(),
        chunk.label,
        x.lexical.vri,
        pipeline.lexicons().vri.fusion_index,
        &x.metrics,
        class,
    )
}

pub fn featurize_all(chunks: &[Chunk], pipeline: &FeaturePipeline<'_>, model: &FittedModel) -> Result<Vec<RiskSample>> {
    chunks.par_iter().map(|c| featurize(c, pipeline, model)).collect()
}

/// Seeded 80/20 chunk-level split.
pub fn split_samples(samples: Vec<RiskSample>, seed: u64) -> Result<(Vec<RiskSample>, Vec<RiskSample>)> {
    let s = split(samples, &SplitSpec::new(0.8, 0.0, 0.2, seed)?)?;
    Ok((s.train, s.test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub rows: Vec<EvalReport>,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub caveat: String,
}

impl RiskReport {
    pub fn row(&self, name: &str) -> Option<&EvalReport> {
        self.rows.iter().find(|r| r.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskOptions {
    pub folds: usize,
    pub seed: u64,
}

impl Default for RiskOptions {
    fn default() -> Self {
        RiskOptions {
            folds: 4,
            seed: DEFAULT_SEED,
        }
    }
}

// The forest code indexes three classes; risk labels ride in the same slots.
fn slot(l: RiskLabel) -> FusionLabel {
    FusionLabel::from_index(l.index()).expect("three classes")
}

fn unslot(l: FusionLabel) -> RiskLabel {
    RiskLabel::from_index(l.index()).expect("three classes")
}

fn forest_predictions(
    train: &[Vec<f64>],
    y: &[RiskLabel],
    test: &[Vec<f64>],
    grid: &HyperparameterGrid,
    opts: &RiskOptions,
) -> Result<Vec<RiskLabel>> {
    let y: Vec<FusionLabel> = y.iter().map(|&l| slot(l)).collect();
    let topts = TrainOptions {
        folds: opts.folds,
        seed: opts.seed,
        weighting: ClassWeighting::None,
        ..TrainOptions::default()
    };
    let (model, _) = fit_classifier(train, &y, grid, &topts)?;
    Ok(model.predict_labels(test)?.into_iter().map(unslot).collect())
}

/// Four rows: `majority`, `vri_threshold`, `vri_rf`, `clifs_vri_rf`.
pub fn run_task(
    train: &[RiskSample],
    test: &[RiskSample],
    grid: &HyperparameterGrid,
    opts: &RiskOptions,
) -> Result<RiskReport> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::usage("risk task needs non-empty train and test sets"));
    }
    let y_train: Vec<RiskLabel> = train.iter().map(|s| s.label).collect();
    let y_test: Vec<RiskLabel> = test.iter().map(|s| s.label).collect();

    let threshold: Vec<RiskLabel> = test.iter().map(|s| s.vri_result.mapped_risk).collect();

    let vri_rows = |xs: &[RiskSample]| xs.iter().map(|s| vri_features(&s.vri)).collect::<Vec<_>>();
    let vri_pred = forest_predictions(&vri_rows(train), &y_train, &vri_rows(test), grid, opts)?;

    let clifs_rows = |xs: &[RiskSample]| xs.iter().map(|s| s.clifs.values.clone()).collect::<Vec<_>>();
    let clifs_pred = forest_predictions(&clifs_rows(train), &y_train, &clifs_rows(test), grid, opts)?;

    Ok(RiskReport {
        rows: vec![
            majority_baseline(&y_train, &y_test, None)?,
            classification_report("vri_threshold", &y_test, &threshold, None)?,
            classification_report("vri_rf", &y_test, &vri_pred, None)?,
            classification_report("clifs_vri_rf", &y_test, &clifs_pred, None)?,
        ],
        n_train: train.len(),
        n_test: test.len(),
        seed: opts.seed,
        caveat: SPLIT_CAVEAT.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexical::LexiconBundle;
    use crate::mlm::MentionFlags;
    use crate::models::grid::TrainParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn metrics(f: f64) -> FusionMetrics {
        FusionMetrics {
            s_i_to_t: f,
            s_t_to_i: f,
            fusion_proximity: f,
            fictive_kinship: f / 2.0,
            flags: MentionFlags::default(),
        }
    }

    fn numbered_vri() -> VriCategoryScores {
        VriCategoryScores {
            a_scores: vec![0.0, 1.0, 2.0, 3.0],
            b_scores: vec![4.0, 5.0, 6.0],
            c_scores: vec![7.0, 8.0, 9.0, 10.0, 11.0],
            identification: 12.0,
        }
    }

    #[test]
    fn layout_drops_fusion_category() {
        let lex = LexiconBundle::illustrative().vri;
        let names = risk_feature_names(&lex);
        assert_eq!(names.len(), RiskFeatureVector::LEN);
        assert!(!names.iter().any(|n| n == "fusion"));
        assert_eq!(names[11], "identification");
        assert_eq!(&names[12..], CLIFS_RISK_COLUMNS);

        let v = RiskFeatureVector::new(&numbered_vri(), 0, &metrics(0.5), FusionLabel::High).unwrap();
        assert_eq!(v.values.len(), RiskFeatureVector::LEN);
        assert!(!v.values[..12].contains(&0.0));
        assert_eq!(v.values[..12], (1..=12).map(f64::from).collect::<Vec<_>>()[..]);
        assert_eq!(v.values[16], 2.0);
        assert_eq!(v.values[12..16], [0.5, 0.25, 0.5, 0.5]);
    }

    #[test]
    fn class_encoding() {
        for (l, e) in [(FusionLabel::Low, 0.0), (FusionLabel::Medium, 1.0), (FusionLabel::High, 2.0)] {
            let v = RiskFeatureVector::new(&numbered_vri(), 3, &metrics(0.1), l).unwrap();
            assert_eq!(v.values[16], e);
        }
    }

    fn chunk(author: &str, label: RiskLabel, doc: &str, index: usize) -> Chunk {
        Chunk {
            source_id: doc.into(),
            author: author.into(),
            label,
            index,
            text: format!("{doc} {index}"),
            word_count: 2,
        }
    }

    #[test]
    fn prepare_balances_to_minority() {
        let mut chunks = Vec::new();
        for i in 0..10 {
            chunks.push(chunk(["a", "b"][i % 2], RiskLabel::Moderate, "m", i));
        }
        for i in 0..4 {
            chunks.push(chunk("c", RiskLabel::IdeologicallyExtreme, "e", i));
        }
        for i in 0..3 {
            chunks.push(chunk("d", RiskLabel::ViolentSelfSacrificial, "v", i));
        }
        let out = prepare(&chunks).unwrap();
        let counts = crate::corpus::class_counts(&out);
        assert!(counts.values().all(|&c| c == 3));
        let minority: Vec<&Chunk> = out.iter().filter(|c| c.label == RiskLabel::ViolentSelfSacrificial).collect();
        assert_eq!(minority.len(), 3);
    }

    fn synthetic(n_per: usize, seed: u64) -> Vec<RiskSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for label in RiskLabel::ALL {
            for i in 0..n_per {
                // VRI categories are pure noise; fusion carries the class
                let mut vri = VriCategoryScores::uniform(0.0);
                for s in vri.a_scores.iter_mut().chain(&mut vri.b_scores).chain(&mut vri.c_scores) {
                    *s = rng.gen_range(0.0..0.2);
                }
                let f = label.index() as f64 * 0.3 + rng.gen_range(0.0..0.2);
                let class = FusionLabel::from_index(label.index()).unwrap();
                out.push(RiskSample::new(format!("{label}-{i}"), label, vri, 0, &metrics(f), class).unwrap());
            }
        }
        out
    }

    #[test]
    fn fusion_signal_beats_threshold_rule() {
        let (train, test) = split_samples(synthetic(40, 1), 42).unwrap();
        let grid = HyperparameterGrid::single(TrainParams {
            n_estimators: 20,
            ..TrainParams::default()
        });
        let r = run_task(&train, &test, &grid, &RiskOptions::default()).unwrap();
        let names: Vec<&str> = r.rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["majority", "vri_threshold", "vri_rf", "clifs_vri_rf"]);
        let f = |n: &str| r.row(n).unwrap().macro_f1.unwrap();
        assert!(f("clifs_vri_rf") > f("vri_threshold"));
        assert!(f("clifs_vri_rf") >= f("vri_rf"));
        let again = run_task(&train, &test, &grid, &RiskOptions::default()).unwrap();
        assert_eq!(r, again);
    }
}
