//! Exhaustive grid search with k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forest::{ForestParams, MaxFeatures, RandomForest};
use super::scaler::{FittedScaler, ScalerKind};
use super::{class_weights, FittedModel, Task};
use crate::corpus::{FusionLabel, DEFAULT_SEED};
use crate::error::{Error, Result};
use crate::eval::{macro_f1, mae};

/// Candidate values per hyperparameter. `max_depth` 0 means unbounded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperparameterGrid {
    pub n_estimators: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
    pub min_samples_split: Vec<usize>,
    pub scaler: Vec<ScalerKind>,
}

impl Default for HyperparameterGrid {
    fn default() -> Self {
        HyperparameterGrid {
            n_estimators: vec![50, 100, 200, 300, 400],
            max_depth: vec![0, 10, 15, 20],
            min_samples_leaf: vec![1, 2, 5, 10],
            min_samples_split: vec![2, 5, 10, 20],
            scaler: vec![
                ScalerKind::None,
                ScalerKind::Standardize,
                ScalerKind::MinMax,
                ScalerKind::Robust,
            ],
        }
    }
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainParams {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub scaler: ScalerKind,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            n_estimators: 100,
            max_depth: None,
            min_samples_leaf: 1,
            min_samples_split: 2,
            scaler: ScalerKind::None,
        }
    }
}

impl TrainParams {
    pub fn forest_params(&self, task: Task) -> ForestParams {
        ForestParams {
            n_estimators: self.n_estimators,
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            min_samples_split: self.min_samples_split,
            max_features: match task {
                Task::Classification => MaxFeatures::Sqrt,
                Task::Regression => MaxFeatures::Third,
            },
            bootstrap: true,
        }
    }
}

impl HyperparameterGrid {
    /// A single-point grid.
    pub fn single(p: TrainParams) -> Self {
        HyperparameterGrid {
            n_estimators: vec![p.n_estimators],
            max_depth: vec![p.max_depth.unwrap_or(0)],
            min_samples_leaf: vec![p.min_samples_leaf],
            min_samples_split: vec![p.min_samples_split],
            scaler: vec![p.scaler],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_estimators.is_empty()
            || self.max_depth.is_empty()
            || self.min_samples_leaf.is_empty()
            || self.min_samples_split.is_empty()
            || self.scaler.is_empty()
        {
            return Err(Error::config("every grid list must be non-empty"));
        }
        if self.n_estimators.contains(&0) || self.min_samples_leaf.contains(&0) {
            return Err(Error::config("n_estimators and min_samples_leaf must be positive"));
        }
        if self.min_samples_split.iter().any(|&s| s < 2) {
            return Err(Error::config("min_samples_split must be at least 2"));
        }
        Ok(())
    }

    /// Every combination, in a fixed nested order.
    pub fn configurations(&self) -> Vec<TrainParams> {
        let mut out = Vec::new();
        for &n in &self.n_estimators {
            for &d in &self.max_depth {
                for &leaf in &self.min_samples_leaf {
                    for &split in &self.min_samples_split {
                        for &scaler in &self.scaler {
                            out.push(TrainParams {
                                n_estimators: n,
                                max_depth: (d > 0).then_some(d),
                                min_samples_leaf: leaf,
                                min_samples_split: split,
                                scaler,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Whether to apply the inverse-frequency weights with doubled low/high.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeighting {
    #[default]
    Doubled,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub folds: usize,
    pub seed: u64,
    pub weighting: ClassWeighting,
    /// Regression output range.
    pub clip: (f64, f64),
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            folds: 4,
            seed: DEFAULT_SEED,
            weighting: ClassWeighting::Doubled,
            clip: (1.0, 7.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvEntry {
    pub params: TrainParams,
    pub fold_scores: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    /// `macro_f1` (maximised) or `mae` (minimised).
    pub objective: String,
    pub folds: usize,
    pub seed: u64,
    pub entries: Vec<CvEntry>,
    pub best_index: usize,
}

impl CvReport {
    pub fn best(&self) -> &CvEntry {
        &self.entries[self.best_index]
    }
}

/// Held-out index sets. Each class is shuffled and dealt round-robin so
/// every fold sees every class.
pub fn stratified_folds(labels: &[usize], n_classes: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::usage("at least 2 folds required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(Error::usage(format!(
                "class {c} has {} examples, fewer than {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Shuffled contiguous folds.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || n < k {
        return Err(Error::usage(format!("cannot make {k} folds from {n} rows")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = n / k + usize::from(f < n % k);
        let mut fold = idx[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    Ok(folds)
}

fn complement(n: usize, held: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in held {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

fn take<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

/// Fits scaler and forest on one training set.
fn fit_once(
    task: Task,
    x: &[Vec<f64>],
    y_class: Option<&[FusionLabel]>,
    y_value: Option<&[f64]>,
    params: &TrainParams,
    opts: &TrainOptions,
) -> Result<FittedModel> {
    let scaler = FittedScaler::fit(params.scaler, x);
    let xs = scaler.transform(x);
    let fp = params.forest_params(task);
    let forest = match task {
        Task::Classification => {
            let y = y_class.expect("labels");
            let idx: Vec<usize> = y.iter().map(|l| l.index()).collect();
            let w = match opts.weighting {
                ClassWeighting::Doubled => Some(class_weights(y)?.to_vec()),
                ClassWeighting::None => None,
            };
            RandomForest::fit_classifier(&xs, &idx, 3, w.as_deref(), &fp, opts.seed)?
        }
        Task::Regression => {
            RandomForest::fit_regressor(&xs, y_value.expect("values"), Some(opts.clip), &fp, opts.seed)?
        }
    };
    Ok(FittedModel {
        task,
        params: *params,
        scaler,
        forest,
        schema: None,
    })
}

fn search(
    task: Task,
    x: &[Vec<f64>],
    y_class: Option<&[FusionLabel]>,
    y_value: Option<&[f64]>,
    grid: &HyperparameterGrid,
    opts: &TrainOptions,
) -> Result<(FittedModel, CvReport)> {
    grid.validate()?;
    let folds = match task {
        Task::Classification => {
            let y: Vec<usize> = y_class.expect("labels").iter().map(|l| l.index()).collect();
            stratified_folds(&y, 3, opts.folds, opts.seed)?
        }
        Task::Regression => kfold(x.len(), opts.folds, opts.seed)?,
    };
    let configs = grid.configurations();
    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..folds.len()).map(move |f| (c, f)))
        .collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, f)| -> Result<f64> {
            let held = &folds[f];
            let train = complement(x.len(), held);
            let xt = take(x, &train);
            let xv = take(x, held);
            let yc = y_class.map(|y| take(y, &train));
            let yv = y_value.map(|y| take(y, &train));
            let model = fit_once(task, &xt, yc.as_deref(), yv.as_deref(), &configs[c], opts)?;
            match task {
                Task::Classification => {
                    let truth = take(y_class.expect("labels"), held);
                    let pred = model.predict_labels(&xv)?;
                    Ok(macro_f1(&truth, &pred)?.macro_f1)
                }
                Task::Regression => {
                    let truth = take(y_value.expect("values"), held);
                    let pred = model.predict_scores(&xv)?;
                    mae(&truth, &pred)
                }
            }
        })
        .collect::<Result<_>>()?;

    let k = folds.len();
    let entries: Vec<CvEntry> = configs
        .iter()
        .enumerate()
        .map(|(c, p)| {
            let fold_scores = scores[c * k..(c + 1) * k].to_vec();
            let mean = fold_scores.iter().sum::<f64>() / k as f64;
            CvEntry {
                params: *p,
                fold_scores,
                mean,
            }
        })
        .collect();
    let better = |a: f64, b: f64| match task {
        Task::Classification => a > b,
        Task::Regression => a < b,
    };
    let mut best_index = 0;
    for (i, e) in entries.iter().enumerate() {
        if better(e.mean, entries[best_index].mean) {
            best_index = i;
        }
    }
    let best = entries[best_index].params;
    let model = fit_once(task, x, y_class, y_value, &best, opts)?;
    Ok((
        model,
        CvReport {
            objective: match task {
                Task::Classification => "macro_f1".into(),
                Task::Regression => "mae".into(),
            },
            folds: k,
            seed: opts.seed,
            entries,
            best_index,
        },
    ))
}

/// Grid search maximising mean macro-F1 over stratified folds, then a
/// refit on all rows with the best configuration.
pub fn fit_classifier(
    x: &[Vec<f64>],
    y: &[FusionLabel],
    grid: &HyperparameterGrid,
    opts: &TrainOptions,
) -> Result<(FittedModel, CvReport)> {
    if x.len() != y.len() {
        return Err(Error::usage(format!("{} rows but {} labels", x.len(), y.len())));
    }
    if x.len() < opts.folds {
        return Err(Error::usage(format!("{} rows is fewer than {} folds", x.len(), opts.folds)));
    }
    class_weights(y)?;
    search(Task::Classification, x, Some(y), None, grid, opts)
}

/// Grid search minimising mean MAE over shuffled folds.
pub fn fit_regressor(
    x: &[Vec<f64>],
    y: &[f64],
    grid: &HyperparameterGrid,
    opts: &TrainOptions,
) -> Result<(FittedModel, CvReport)> {
    if x.len() != y.len() {
        return Err(Error::usage(format!("{} rows but {} targets", x.len(), y.len())));
    }
    let (lo, hi) = opts.clip;
    if let Some(v) = y.iter().find(|v| !(lo..=hi).contains(*v)) {
        return Err(Error::usage(format!("target {v} outside [{lo}, {hi}]")));
    }
    search(Task::Regression, x, None, Some(y), grid, opts)
}
