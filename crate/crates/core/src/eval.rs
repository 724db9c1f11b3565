//! Metrics, bootstrap intervals, baselines and ablation.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::{FusionLabel, RiskLabel, DEFAULT_SEED};
use crate::error::{Error, Result};
use crate::features::{FeatureGroup, FeatureSchema};

pub const N_CLASSES: usize = 3;
pub const DEFAULT_RESAMPLES: usize = 1000;

/// Anything usable as one of the three class labels.
pub trait ClassLabel: Copy + Send + Sync {
    fn class_index(self) -> usize;
}

impl ClassLabel for FusionLabel {
    fn class_index(self) -> usize {
        self.index()
    }
}

impl ClassLabel for RiskLabel {
    fn class_index(self) -> usize {
        self.index()
    }
}

impl ClassLabel for usize {
    fn class_index(self) -> usize {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    /// Mean over the classes that occur in either vector.
    pub macro_f1: f64,
    /// Absent or never-correct classes score 0.
    pub per_class: [f64; N_CLASSES],
}

pub fn macro_f1<L: ClassLabel>(y_true: &[L], y_pred: &[L]) -> Result<F1Scores> {
    if y_true.len() != y_pred.len() {
        return Err(Error::usage(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut tp = [0usize; N_CLASSES];
    let mut n_true = [0usize; N_CLASSES];
    let mut n_pred = [0usize; N_CLASSES];
    for (t, p) in y_true.iter().zip(y_pred) {
        let (t, p) = (t.class_index(), p.class_index());
        if t >= N_CLASSES || p >= N_CLASSES {
            return Err(Error::usage("label index outside the three classes"));
        }
        n_true[t] += 1;
        n_pred[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }
    let mut per_class = [0.0; N_CLASSES];
    let mut present = 0;
    let mut sum = 0.0;
    for c in 0..N_CLASSES {
        // 2tp / (|true| + |pred|) equals 2PR/(P+R) and is 0 whenever either is undefined
        let denom = n_true[c] + n_pred[c];
        if denom > 0 {
            per_class[c] = 2.0 * tp[c] as f64 / denom as f64;
            present += 1;
            sum += per_class[c];
        }
    }
    let macro_f1 = if present == 0 { 0.0 } else { sum / present as f64 };
    Ok(F1Scores { macro_f1, per_class })
}

pub fn mae(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::usage(format!(
            "{} true values but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::usage("mae of empty vectors"));
    }
    Ok(y_true.iter().zip(y_pred).map(|(a, b)| (a - b).abs()).sum::<f64>() / y_true.len() as f64)
}

/// 1-based ranks; ties share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    pub rs: f64,
    pub p_value: f64,
    /// A vector was constant; `rs` is reported as 0.
    pub undefined: bool,
}

/// Pearson correlation of average ranks, with a two-sided p-value from
/// the t approximation on n - 2 degrees of freedom.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<SpearmanResult> {
    if x.len() != y.len() {
        return Err(Error::usage("spearman inputs differ in length"));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::usage("spearman needs at least 3 points"));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let mean = (n as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean) * (a - mean);
        syy += (b - mean) * (b - mean);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(SpearmanResult {
            rs: 0.0,
            p_value: 1.0,
            undefined: true,
        });
    }
    let rs = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if rs.abs() >= 1.0 {
        0.0
    } else {
        let t = rs * (df / (1.0 - rs * rs)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Ok(SpearmanResult {
        rs,
        p_value,
        undefined: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_resamples: usize,
    pub seed: u64,
}

/// Indices of resample `r`: `n_items` draws with replacement from a
/// stream keyed by `(seed, r)`.
pub fn bootstrap_indices(n_items: usize, resample: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(resample as u64);
    (0..n_items).map(|_| rng.gen_range(0..n_items)).collect()
}

/// Linear-interpolation percentile, `q` in [0, 100].
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Percentile interval (2.5, 97.5) of `metric` over `n` resamples of
/// size N. Every resample contributes a value.
pub fn bootstrap_ci<T, M>(y_true: &[T], y_pred: &[T], metric: M, n: usize, seed: u64) -> Result<BootstrapCi>
where
    T: Copy + Send + Sync,
    M: Fn(&[T], &[T]) -> Result<f64> + Sync,
{
    if y_true.len() != y_pred.len() {
        return Err(Error::usage("bootstrap inputs differ in length"));
    }
    if y_true.len() < 2 {
        return Err(Error::usage("bootstrap needs at least 2 items"));
    }
    if n == 0 {
        return Err(Error::usage("n_resamples must be at least 1"));
    }
    let point = metric(y_true, y_pred)?;
    let values = (0..n)
        .into_par_iter()
        .map(|r| {
            let idx = bootstrap_indices(y_true.len(), r, seed);
            let t: Vec<T> = idx.iter().map(|&i| y_true[i]).collect();
            let p: Vec<T> = idx.iter().map(|&i| y_pred[i]).collect();
            metric(&t, &p)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(BootstrapCi {
        point,
        ci_low: percentile(&values, 2.5),
        ci_high: percentile(&values, 97.5),
        n_resamples: n,
        seed,
    })
}

pub fn macro_f1_metric<L: ClassLabel>(t: &[L], p: &[L]) -> Result<f64> {
    Ok(macro_f1(t, p)?.macro_f1)
}

/// Most frequent training class (ties to the lower index).
pub fn majority_class<L: ClassLabel>(y_train: &[L]) -> Result<L> {
    if y_train.is_empty() {
        return Err(Error::usage("majority of an empty label set"));
    }
    let mut counts = [0usize; N_CLASSES];
    for l in y_train {
        counts[l.class_index().min(N_CLASSES - 1)] += 1;
    }
    let best = (0..N_CLASSES).fold(0, |b, c| if counts[c] > counts[b] { c } else { b });
    Ok(*y_train.iter().find(|l| l.class_index() == best).expect("counted"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvalReport {
    pub name: String,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_class_f1: Option<[f64; N_CLASSES]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spearman: Option<SpearmanResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapCi>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub n_resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        BootstrapSpec {
            n_resamples: DEFAULT_RESAMPLES,
            seed: DEFAULT_SEED,
        }
    }
}

pub fn classification_report<L: ClassLabel>(
    name: &str,
    y_true: &[L],
    y_pred: &[L],
    bootstrap: Option<BootstrapSpec>,
) -> Result<EvalReport> {
    let f1 = macro_f1(y_true, y_pred)?;
    let bootstrap = match bootstrap {
        Some(b) => Some(bootstrap_ci(y_true, y_pred, macro_f1_metric, b.n_resamples, b.seed)?),
        None => None,
    };
    Ok(EvalReport {
        name: name.to_string(),
        n: y_true.len(),
        macro_f1: Some(f1.macro_f1),
        per_class_f1: Some(f1.per_class),
        bootstrap,
        ..EvalReport::default()
    })
}

pub fn regression_report(name: &str, y_true: &[f64], y_pred: &[f64]) -> Result<EvalReport> {
    Ok(EvalReport {
        name: name.to_string(),
        n: y_true.len(),
        mae: Some(mae(y_true, y_pred)?),
        spearman: if y_true.len() >= 3 {
            Some(spearman(y_true, y_pred)?)
        } else {
            None
        },
        ..EvalReport::default()
    })
}

/// Predicts the training-majority class for every test item.
pub fn majority_baseline<L: ClassLabel>(
    y_train: &[L],
    y_test: &[L],
    bootstrap: Option<BootstrapSpec>,
) -> Result<EvalReport> {
    let m = majority_class(y_train)?;
    let pred = vec![m; y_test.len()];
    classification_report("majority", y_test, &pred, bootstrap)
}

/// Train/test feature tables for an ablation run.
pub struct AblationData<'a> {
    pub schema: &'a FeatureSchema,
    pub train_rows: &'a [Vec<f64>],
    pub train_labels: &'a [FusionLabel],
    pub test_rows: &'a [Vec<f64>],
    pub test_labels: &'a [FusionLabel],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub dropped: Vec<FeatureGroup>,
    pub macro_f1: f64,
    /// Ablated minus full; negative means the dropped groups helped.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub full_macro_f1: f64,
    pub rows: Vec<AblationRow>,
}

/// One drop set per group present in the schema.
pub fn single_group_drops(schema: &FeatureSchema) -> Vec<BTreeSet<FeatureGroup>> {
    let present: BTreeSet<FeatureGroup> = schema.groups.iter().copied().collect();
    present.into_iter().map(|g| [g].into_iter().collect()).collect()
}

/// Retrains with each drop set removed and scores on the fixed test set.
/// `trainer(train_rows, train_labels, test_rows)` must tune, fit and
/// return test predictions.
pub fn ablate<F>(data: &AblationData<'_>, drops: &[BTreeSet<FeatureGroup>], trainer: F) -> Result<AblationReport>
where
    F: Fn(&[Vec<f64>], &[FusionLabel], &[Vec<f64>]) -> Result<Vec<FusionLabel>>,
{
    let run = |drop: &BTreeSet<FeatureGroup>| -> Result<f64> {
        let keep = data.schema.retained_indices(drop);
        if keep.is_empty() {
            return Err(Error::usage("ablation would drop every column"));
        }
        let project = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
            rows.iter().map(|r| keep.iter().map(|&i| r[i]).collect()).collect()
        };
        let pred = trainer(&project(data.train_rows), data.train_labels, &project(data.test_rows))?;
        Ok(macro_f1(data.test_labels, &pred)?.macro_f1)
    };
    let full = run(&BTreeSet::new())?;
    let mut rows = Vec::new();
    for d in drops {
        let score = if d.is_empty() { full } else { run(d)? };
        rows.push(AblationRow {
            dropped: d.iter().copied().collect(),
            macro_f1: score,
            delta: score - full,
        });
    }
    Ok(AblationReport {
        full_macro_f1: full,
        rows,
    })
}

/// Empirical CDF table: `label,value,cdf` per point, one block per label.
pub fn write_cdf_table(path: impl AsRef<Path>, metric: &str, values: &[(FusionLabel, f64)]) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut lines = vec![format!("label,{metric},cdf")];
    for label in [FusionLabel::Low, FusionLabel::Medium, FusionLabel::High] {
        let mut v: Vec<f64> = values.iter().filter(|(l, _)| *l == label).map(|(_, x)| *x).collect();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        for (i, x) in v.iter().enumerate() {
            lines.push(format!("{},{x},{}", label.as_str(), (i + 1) as f64 / n));
        }
    }
    for l in lines {
        writeln!(out, "{l}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Predicted-versus-true table: `true,predicted` per row.
pub fn write_scatter_table(path: impl AsRef<Path>, y_true: &[f64], y_pred: &[f64]) -> Result<()> {
    if y_true.len() != y_pred.len() {
        return Err(Error::usage("scatter inputs differ in length"));
    }
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    writeln!(out, "true,predicted").map_err(|e| Error::io(path, e))?;
    for (t, p) in y_true.iter().zip(y_pred) {
        writeln!(out, "{t},{p}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use FusionLabel::*;

    #[test]
    fn all_medium_on_10_30_10() {
        let truth: Vec<FusionLabel> = [vec![Low; 10], vec![Medium; 30], vec![High; 10]].concat();
        let pred = vec![Medium; 50];
        let f = macro_f1(&truth, &pred).unwrap();
        // medium: P = 30/50, R = 1, F1 = 2*.6/(1.6) = 0.75
        assert_eq!(f.per_class, [0.0, 0.75, 0.0]);
        assert!((f.macro_f1 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_length_mismatch() {
        let y = [Low, Medium, High, High];
        assert_eq!(macro_f1(&y, &y).unwrap().macro_f1, 1.0);
        assert!(matches!(macro_f1(&y, &y[..2]), Err(Error::Usage(_))));
    }

    #[test]
    fn absent_class_scores_zero() {
        let f = macro_f1(&[Low, Low, Medium], &[Low, Medium, Low]).unwrap();
        assert_eq!(f.per_class[2], 0.0);
        // low: tp 1, |true| 2, |pred| 2 -> 0.5; medium: tp 0 -> 0
        assert!((f.macro_f1 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn majority_on_balanced_test_is_one_sixth() {
        let train = [Medium, Medium, Low];
        let test = [Low, Medium, High, Low, Medium, High];
        let r = majority_baseline(&train, &test, None).unwrap();
        assert!((r.macro_f1.unwrap() - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 7.0], &[2.0, 6.0]).unwrap(), 1.0);
        assert_eq!(mae(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert!(mae(&[1.0], &[]).is_err());
    }

    #[test]
    fn spearman_closed_form() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0];
        // d = (1,-1,1,-1,1,-1), sum d^2 = 6
        let expected = 1.0 - 6.0 * 6.0 / (6.0 * 35.0);
        assert!((spearman(&x, &y).unwrap().rs - expected).abs() < 1e-12);
        assert_eq!(spearman(&x, &x).unwrap().rs, 1.0);
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        assert_eq!(spearman(&x, &rev).unwrap().rs, -1.0);
    }

    #[test]
    fn spearman_constant_is_flagged() {
        let r = spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).unwrap();
        assert!(r.undefined);
        assert_eq!(r.rs, 0.0);
    }

    #[test]
    fn average_ranks_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn spearman_p_value_matches_t_distribution() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y = [2.0, 0.0, 1.0, 6.0, 3.0, 4.0, 9.0, 5.0, 7.0, 8.0];
        let r = spearman(&x, &y).unwrap();
        let d2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum();
        let rs = 1.0 - 6.0 * d2 / (10.0 * 99.0);
        assert!((r.rs - rs).abs() < 1e-12);
        let t = rs * (8.0 / (1.0 - rs * rs)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, 8.0).unwrap();
        assert!((r.p_value - 2.0 * (1.0 - dist.cdf(t))).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_perfect_and_reproducible() {
        let y: Vec<FusionLabel> = (0..30).map(|i| FusionLabel::from_index(i % 3).unwrap()).collect();
        let ci = bootstrap_ci(&y, &y, macro_f1_metric, 1000, 42).unwrap();
        assert_eq!((ci.ci_low, ci.ci_high), (1.0, 1.0));
        let mut pred = y.clone();
        pred[0] = High;
        pred[4] = Low;
        let a = bootstrap_ci(&y, &pred, macro_f1_metric, 200, 42).unwrap();
        let b = bootstrap_ci(&y, &pred, macro_f1_metric, 200, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.ci_low <= a.ci_high);
    }

    #[test]
    fn bootstrap_replays_index_log() {
        let t = [Low, Medium, High];
        let p = [Low, High, High];
        let ci = bootstrap_ci(&t, &p, macro_f1_metric, 10, 7).unwrap();
        let values: Vec<f64> = (0..10)
            .map(|r| {
                let idx = bootstrap_indices(3, r, 7);
                let tt: Vec<_> = idx.iter().map(|&i| t[i]).collect();
                let pp: Vec<_> = idx.iter().map(|&i| p[i]).collect();
                macro_f1(&tt, &pp).unwrap().macro_f1
            })
            .collect();
        assert_eq!(ci.ci_low, percentile(&values, 2.5));
        assert_eq!(ci.ci_high, percentile(&values, 97.5));
    }

    #[test]
    fn ablation_of_empty_set_is_zero_delta() {
        let schema = FeatureSchema::full(1);
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64; schema.len()]).collect();
        let labels: Vec<FusionLabel> = (0..6).map(|i| FusionLabel::from_index(i % 3).unwrap()).collect();
        let data = AblationData {
            schema: &schema,
            train_rows: &rows,
            train_labels: &labels,
            test_rows: &rows,
            test_labels: &labels,
        };
        let trainer = |_: &[Vec<f64>], _: &[FusionLabel], test: &[Vec<f64>]| Ok(vec![Low; test.len()]);
        let r = ablate(&data, &[BTreeSet::new()], trainer).unwrap();
        assert_eq!(r.rows[0].delta, 0.0);
    }

    #[test]
    fn plot_tables_written() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cdf.csv");
        write_cdf_table(&p, "fusion", &[(Low, 0.2), (Low, 0.1), (High, 0.5)]).unwrap();
        let s = std::fs::read_to_string(&p).unwrap();
        assert_eq!(s, "label,fusion,cdf\nlow,0.1,0.5\nlow,0.2,1\nhigh,0.5,1\n");
        let q = dir.path().join("scatter.csv");
        write_scatter_table(&q, &[1.0, 2.0], &[1.5, 2.5]).unwrap();
        assert_eq!(std::fs::read_to_string(&q).unwrap(), "true,predicted\n1,1.5\n2,2.5\n");
    }
}
