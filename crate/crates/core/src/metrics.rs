//! Detection rates, ROC curves and their CSV form.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Span;
use crate::stats::ScanPair;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("predictions and labels use different windowings (at window {0})")]
    WindowingMismatch(usize),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    /// TP / (TP + FN); NaN when there are no positives.
    pub fn tpr(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// FP / (TN + FP); NaN when there are no negatives.
    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.tn + self.fp)
    }

    pub fn add(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

/// A window together with a binary flag (predicted or ground truth).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub span: Span,
    pub positive: bool,
}

/// Marks each window that overlaps any of the intervals.
pub fn label_windows(windows: &[Span], intervals: &[Span]) -> Vec<LabeledWindow> {
    windows
        .iter()
        .map(|w| LabeledWindow {
            span: *w,
            positive: intervals.iter().any(|iv| iv.overlaps(w)),
        })
        .collect()
}

/// Window-by-window confusion counts. Both sequences must cover the same
/// windows in the same order.
pub fn confusion(predictions: &[LabeledWindow], labels: &[LabeledWindow]) -> Result<ConfusionCounts, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::WindowingMismatch(predictions.len().min(labels.len())));
    }
    let mut c = ConfusionCounts::default();
    for (i, (p, l)) in predictions.iter().zip(labels).enumerate() {
        if p.span != l.span {
            return Err(MetricsError::WindowingMismatch(i));
        }
        c.record(p.positive, l.positive);
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Pool the counts of all devices.
    #[default]
    Micro,
    /// Average the per-device rates, skipping undefined ones.
    Macro,
}

/// Combines per-device counts into one (tpr, fpr) pair.
pub fn average_rates(per_device: &[ConfusionCounts], averaging: Averaging) -> (f64, f64) {
    match averaging {
        Averaging::Micro => {
            let mut total = ConfusionCounts::default();
            for c in per_device {
                total.add(c);
            }
            (total.tpr(), total.fpr())
        }
        Averaging::Macro => (
            nan_mean(per_device.iter().map(ConfusionCounts::tpr)),
            nan_mean(per_device.iter().map(ConfusionCounts::fpr)),
        ),
    }
}

fn nan_mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.filter(|x| !x.is_nan()).fold((0.0, 0u32), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / f64::from(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub parameter: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

/// Orders sweep results by parameter value.
pub fn roc(mut points: Vec<RocPoint>) -> Result<RocCurve, MetricsError> {
    if points.len() < 2 {
        return Err(MetricsError::InvalidParameter(format!(
            "a curve needs at least 2 sweep points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| p.parameter.is_nan()) {
        return Err(MetricsError::InvalidParameter("sweep parameter is NaN".into()));
    }
    points.sort_by(|a, b| a.parameter.total_cmp(&b.parameter));
    Ok(RocCurve { points })
}

impl RocCurve {
    /// Writes `parameter,tpr,fpr` rows; undefined rates are written as `NaN`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["parameter", "tpr", "fpr"])?;
        for p in &self.points {
            w.write_record([p.parameter.to_string(), p.tpr.to_string(), p.fpr.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Point nearest to the ideal corner (fpr 0, tpr 1).
    pub fn best_point(&self) -> Option<&RocPoint> {
        self.points
            .iter()
            .filter(|p| !p.tpr.is_nan() && !p.fpr.is_nan())
            .min_by(|a, b| {
                let da = a.fpr.powi(2) + (1.0 - a.tpr).powi(2);
                let db = b.fpr.powi(2) + (1.0 - b.tpr).powi(2);
                da.total_cmp(&db)
            })
    }
}

/// Scan pairs scored against audio intervals: a pair is positive when
/// either of its windows overlaps an interval, and predicted positive when
/// its p-value is below the threshold. Pairs without a p-value count as
/// predicted negative.
pub fn scan_counts(pairs: &[ScanPair], labels: &[Span], threshold: f64) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for pair in pairs {
        let span = pair.span();
        c.record(pair.reactive_at(threshold), labels.iter().any(|l| l.overlaps(&span)));
    }
    c
}

/// One ROC point per threshold over several devices' scans.
pub fn scan_threshold_sweep(
    per_device: &[(Vec<ScanPair>, Vec<Span>)],
    thresholds: &[f64],
    averaging: Averaging,
) -> Vec<RocPoint> {
    thresholds
        .iter()
        .map(|&t| {
            let counts: Vec<ConfusionCounts> = per_device.iter().map(|(p, l)| scan_counts(p, l, t)).collect();
            let (tpr, fpr) = average_rates(&counts, averaging);
            RocPoint { parameter: t, tpr, fpr }
        })
        .collect()
}

/// `steps + 1` evenly spaced thresholds from 0 to 1.
pub fn threshold_grid(steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| i as f64 / steps as f64).collect()
}

/// Rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}
