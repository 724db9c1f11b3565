//! Per-column feature scaling, fit on training rows only.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalerKind {
    #[default]
    None,
    /// Mean and population standard deviation.
    Standardize,
    MinMax,
    /// Median and interquartile range.
    Robust,
}

impl std::str::FromStr for ScalerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(ScalerKind::None),
            "standardize" | "standard" => Ok(ScalerKind::Standardize),
            "minmax" => Ok(ScalerKind::MinMax),
            "robust" => Ok(ScalerKind::Robust),
            other => Err(format!("unknown scaler {other:?}")),
        }
    }
}

/// `x' = (x - center) / scale` per column. Zero-spread columns keep scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedScaler {
    pub kind: ScalerKind,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl FittedScaler {
    pub fn fit(kind: ScalerKind, rows: &[Vec<f64>]) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut center = vec![0.0; width];
        let mut scale = vec![1.0; width];
        if kind != ScalerKind::None && !rows.is_empty() {
            for j in 0..width {
                let mut col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
                let (c, s) = match kind {
                    ScalerKind::None => unreachable!(),
                    ScalerKind::Standardize => {
                        let mean = col.iter().sum::<f64>() / n;
                        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                        (mean, var.sqrt())
                    }
                    ScalerKind::MinMax => {
                        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        (lo, hi - lo)
                    }
                    ScalerKind::Robust => {
                        col.sort_by(f64::total_cmp);
                        let iqr = percentile_sorted(&col, 0.75) - percentile_sorted(&col, 0.25);
                        (percentile_sorted(&col, 0.5), iqr)
                    }
                };
                center[j] = c;
                scale[j] = if s > 0.0 { s } else { 1.0 };
            }
        }
        FittedScaler { kind, center, scale }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        if self.kind == ScalerKind::None {
            return row.to_vec();
        }
        row.iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(x, (c, s))| (x - c) / s)
            .collect()
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }
}
