//! Random forests, grid search, persistence, voting and remote classifiers.

pub mod ensemble;
pub mod forest;
pub mod grid;
pub mod persist;
pub mod prompt;
pub mod remote;
pub mod scaler;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::corpus::FusionLabel;
use crate::error::{Error, Result};
use crate::features::FeatureSchema;

pub use ensemble::{hard_vote, EnsembleModel, Voter, VoterKind};
pub use forest::{ForestKind, ForestParams, MaxFeatures, RandomForest};
pub use grid::{fit_classifier, fit_regressor, ClassWeighting, CvReport, HyperparameterGrid, TrainOptions, TrainParams};
pub use scaler::{FittedScaler, ScalerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

/// `w_c = N / (3 n_c)`, then the low and high weights are doubled.
pub fn class_weights(labels: &[FusionLabel]) -> Result<[f64; 3]> {
    let mut counts = [0usize; 3];
    for l in labels {
        counts[l.index()] += 1;
    }
    if let Some(c) = (0..3).find(|&c| counts[c] == 0) {
        return Err(Error::usage(format!(
            "class {} absent from training labels",
            FusionLabel::from_index(c).expect("index").as_str()
        )));
    }
    let n = labels.len() as f64;
    let mut w = counts.map(|c| n / (3.0 * c as f64));
    w[FusionLabel::Low.index()] *= 2.0;
    w[FusionLabel::High.index()] *= 2.0;
    Ok(w)
}

/// A scaler and forest trained together, plus the column schema they
/// expect when known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub task: Task,
    pub params: TrainParams,
    pub scaler: FittedScaler,
    pub forest: RandomForest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<FeatureSchema>,
}

impl FittedModel {
    pub fn with_schema(mut self, schema: FeatureSchema) -> Self {
        self.schema = Some(schema);
        self
    }

    pub fn n_features(&self) -> usize {
        self.forest.n_features
    }

    pub fn predict_proba(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter()
            .map(|r| self.forest.predict_proba(&self.scaler.transform_row(r)))
            .collect()
    }

    pub fn predict_labels(&self, rows: &[Vec<f64>]) -> Result<Vec<FusionLabel>> {
        rows.iter()
            .map(|r| {
                let c = self.forest.predict_class(&self.scaler.transform_row(r))?;
                Ok(FusionLabel::from_index(c).expect("three classes"))
            })
            .collect()
    }

    pub fn predict_scores(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter()
            .map(|r| self.forest.predict_value(&self.scaler.transform_row(r)))
            .collect()
    }

    /// Importances paired with column names (or `x{i}` without a schema),
    /// highest first.
    pub fn ranked_importances(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self
            .forest
            .importances
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let name = self
                    .schema
                    .as_ref()
                    .and_then(|s| s.names.get(i).cloned())
                    .unwrap_or_else(|| format!("x{i}"));
                (name, v)
            })
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        out
    }
}
