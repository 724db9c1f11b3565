//! Bootstrap-aggregated CART forests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Columns, DecisionTree, Sample, Targets, TreeParams};
use crate::error::{Error, Result};

/// Features tried per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    /// `floor(sqrt(F))`, at least 1.
    Sqrt,
    /// `floor(F / 3)`, at least 1.
    Third,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (n_features as f64).sqrt().floor() as usize,
            MaxFeatures::Third => n_features / 3,
            MaxFeatures::All => n_features,
            MaxFeatures::Count(k) => k.min(n_features),
        };
        k.max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
}

impl ForestParams {
    pub fn classifier(n_estimators: usize) -> Self {
        ForestParams {
            n_estimators,
            max_depth: None,
            min_samples_leaf: 1,
            min_samples_split: 2,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
        }
    }

    pub fn regressor(n_estimators: usize) -> Self {
        ForestParams {
            max_features: MaxFeatures::Third,
            ..Self::classifier(n_estimators)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::usage("n_estimators must be positive"));
        }
        if self.min_samples_leaf == 0 || self.min_samples_split < 2 {
            return Err(Error::usage("min_samples_leaf >= 1 and min_samples_split >= 2 required"));
        }
        if self.max_depth == Some(0) {
            return Err(Error::usage("max_depth must be positive when set"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ForestKind {
    Classifier {
        n_classes: usize,
        class_weights: Vec<f64>,
    },
    Regressor {
        /// Predictions are clamped to this range when set.
        clip: Option<(f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub kind: ForestKind,
    pub params: ForestParams,
    pub seed: u64,
    pub n_features: usize,
    pub trees: Vec<DecisionTree>,
    /// Mean per-tree normalised impurity decrease; sums to 1.
    pub importances: Vec<f64>,
}

fn check_matrix(x: &[Vec<f64>], n_targets: usize) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::usage("cannot fit on an empty training set"));
    }
    if x.len() != n_targets {
        return Err(Error::usage(format!("{} rows but {} targets", x.len(), n_targets)));
    }
    let width = x[0].len();
    if width == 0 {
        return Err(Error::usage("rows have no features"));
    }
    for (i, r) in x.iter().enumerate() {
        if r.len() != width {
            return Err(Error::usage(format!("row {i} has {} features, expected {width}", r.len())));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::usage(format!("row {i} has a non-finite value")));
        }
    }
    Ok(width)
}

/// Row multiplicities of a bootstrap draw, as weighted samples.
fn bootstrap_samples(n: usize, rng: &mut ChaCha8Rng) -> Vec<Sample> {
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.gen_range(0..n)] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| c > 0)
        .map(|(i, c)| (i, c as f64))
        .collect()
}

/// Averages per-tree importances after normalising each tree; trees that
/// never split are skipped. A forest with no splits at all reports uniform
/// importances.
fn combine_importances(raw: &[Vec<f64>], n_features: usize) -> Vec<f64> {
    let mut acc = vec![0.0; n_features];
    let mut used = 0;
    for imp in raw {
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            for (a, v) in acc.iter_mut().zip(imp) {
                *a += v / total;
            }
            used += 1;
        }
    }
    if used == 0 {
        return vec![1.0 / n_features as f64; n_features];
    }
    let total: f64 = acc.iter().sum();
    acc.iter().map(|a| a / total).collect()
}

fn grow(
    x: &Columns,
    targets: Targets<'_>,
    weights: &(dyn Fn(usize) -> f64 + Sync),
    params: &ForestParams,
    seed: u64,
) -> (Vec<DecisionTree>, Vec<Vec<f64>>) {
    let n = x.n_rows();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
        min_samples_leaf: params.min_samples_leaf,
        max_features: params.max_features.resolve(x.n_features()),
    };
    (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let base: Vec<Sample> = if params.bootstrap {
                bootstrap_samples(n, &mut rng)
            } else {
                (0..n).map(|i| (i, 1.0)).collect()
            };
            let samples: Vec<Sample> = base.into_iter().map(|(i, c)| (i, c * weights(i))).collect();
            DecisionTree::fit(x, targets, &samples, &tree_params, &mut rng)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .unzip()
}

impl RandomForest {
    /// Gini forest over class indices. `class_weights[c]` multiplies every
    /// sample of class `c`.
    pub fn fit_classifier(
        x: &[Vec<f64>],
        y: &[usize],
        n_classes: usize,
        class_weights: Option<&[f64]>,
        params: &ForestParams,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        let width = check_matrix(x, y.len())?;
        if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
            return Err(Error::usage(format!("class index {bad} outside 0..{n_classes}")));
        }
        let cw: Vec<f64> = match class_weights {
            Some(w) if w.len() == n_classes => w.to_vec(),
            Some(w) => {
                return Err(Error::usage(format!("{} class weights for {n_classes} classes", w.len())));
            }
            None => vec![1.0; n_classes],
        };
        let cols = Columns::from_rows(x);
        let (trees, raw) = grow(
            &cols,
            Targets::Classes { y, n_classes },
            &|i| cw[y[i]],
            params,
            seed,
        );
        Ok(RandomForest {
            kind: ForestKind::Classifier {
                n_classes,
                class_weights: cw,
            },
            params: *params,
            seed,
            n_features: width,
            importances: combine_importances(&raw, width),
            trees,
        })
    }

    /// Variance-reduction forest.
    pub fn fit_regressor(
        x: &[Vec<f64>],
        y: &[f64],
        clip: Option<(f64, f64)>,
        params: &ForestParams,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        let width = check_matrix(x, y.len())?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::usage("non-finite regression target"));
        }
        let cols = Columns::from_rows(x);
        let (trees, raw) = grow(&cols, Targets::Values(y), &|_| 1.0, params, seed);
        Ok(RandomForest {
            kind: ForestKind::Regressor { clip },
            params: *params,
            seed,
            n_features: width,
            importances: combine_importances(&raw, width),
            trees,
        })
    }

    fn check_row(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_features {
            return Err(Error::usage(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.n_features
            )));
        }
        Ok(())
    }

    /// Mean of per-tree leaf distributions.
    pub fn predict_proba(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_row(row)?;
        let ForestKind::Classifier { n_classes, .. } = &self.kind else {
            return Err(Error::usage("predict_proba on a regressor"));
        };
        let mut acc = vec![0.0; *n_classes];
        for t in &self.trees {
            for (a, p) in acc.iter_mut().zip(t.leaf(row)) {
                *a += p;
            }
        }
        let k = self.trees.len() as f64;
        Ok(acc.into_iter().map(|a| a / k).collect())
    }

    /// Most probable class; ties go to the lower index.
    pub fn predict_class(&self, row: &[f64]) -> Result<usize> {
        let p = self.predict_proba(row)?;
        let mut best = 0;
        for (i, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = i;
            }
        }
        Ok(best)
    }

    pub fn predict_value(&self, row: &[f64]) -> Result<f64> {
        self.check_row(row)?;
        let ForestKind::Regressor { clip } = &self.kind else {
            return Err(Error::usage("predict_value on a classifier"));
        };
        let mean = self.trees.iter().map(|t| t.leaf(row)[0]).sum::<f64>() / self.trees.len() as f64;
        Ok(match clip {
            Some((lo, hi)) => mean.clamp(*lo, *hi),
            None => mean,
        })
    }

    pub fn is_classifier(&self) -> bool {
        matches!(self.kind, ForestKind::Classifier { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n_per: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for c in 0..3 {
            for _ in 0..n_per {
                x.push(vec![c as f64 * 10.0 + rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()]);
                y.push(c);
            }
        }
        (x, y)
    }

    #[test]
    fn separable_blobs_fit_perfectly() {
        let (x, y) = blobs(20, 1);
        let f = RandomForest::fit_classifier(&x, &y, 3, None, &ForestParams::classifier(25), 42).unwrap();
        for (r, &c) in x.iter().zip(&y) {
            assert_eq!(f.predict_class(r).unwrap(), c);
        }
        assert!((f.importances.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(
            f.importances
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0,
            0
        );
    }

    #[test]
    fn same_seed_same_forest() {
        let (x, y) = blobs(15, 2);
        let p = ForestParams::classifier(10);
        let a = RandomForest::fit_classifier(&x, &y, 3, None, &p, 7).unwrap();
        let b = RandomForest::fit_classifier(&x, &y, 3, None, &p, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn regressor_clips() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let f = RandomForest::fit_regressor(&x, &y, Some((1.0, 7.0)), &ForestParams::regressor(5), 0).unwrap();
        assert_eq!(f.predict_value(&[-100.0]).unwrap(), 1.0);
        assert_eq!(f.predict_value(&[100.0]).unwrap(), 7.0);
    }

    #[test]
    fn constant_target_gives_uniform_importances() {
        let x: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 1.0]).collect();
        let f = RandomForest::fit_regressor(&x, &[3.0; 6], None, &ForestParams::regressor(3), 0).unwrap();
        assert_eq!(f.predict_value(&[2.0, 1.0]).unwrap(), 3.0);
        assert_eq!(f.importances, vec![0.5, 0.5]);
    }

    #[test]
    fn rejects_ragged_and_nan() {
        let p = ForestParams::classifier(1);
        assert!(RandomForest::fit_classifier(&[vec![1.0], vec![1.0, 2.0]], &[0, 1], 2, None, &p, 0).is_err());
        assert!(RandomForest::fit_classifier(&[vec![f64::NAN]], &[0], 2, None, &p, 0).is_err());
    }
}
