//! Rate-threshold burst detection: a device streams audio when its outbound
//! rate stays above a threshold for several consecutive windows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{average_rates, Averaging, ConfusionCounts};
use crate::model::{
    serde_secs, split_windows, DeviceAddress, DeviceTrace, DirectionFilter, LabeledTraceSet, ModelError, Span,
    TimeWindow, Timestamp,
};

#[derive(Debug, Error)]
pub enum BurstError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstParams {
    pub window_secs: f64,
    /// Bits per second; a window must exceed it strictly.
    pub rate_threshold: f64,
    pub consecutive: usize,
    #[serde(default)]
    pub direction: DirectionFilter,
}

impl Default for BurstParams {
    fn default() -> Self {
        BurstParams {
            window_secs: 1.0,
            rate_threshold: 23_000.0,
            consecutive: 5,
            direction: DirectionFilter::Outbound,
        }
    }
}

impl BurstParams {
    pub fn validate(&self) -> Result<(), BurstError> {
        if !(self.window_secs > 0.0 && self.window_secs.is_finite()) {
            return Err(BurstError::InvalidParameter(format!(
                "window size {} must be > 0",
                self.window_secs
            )));
        }
        if !(self.rate_threshold > 0.0) {
            return Err(BurstError::InvalidParameter(format!(
                "rate threshold {} must be > 0",
                self.rate_threshold
            )));
        }
        if self.consecutive < 1 {
            return Err(BurstError::InvalidParameter(
                "consecutive window count must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstEvent {
    pub device: DeviceAddress,
    #[serde(with = "serde_secs")]
    pub start: Timestamp,
    #[serde(with = "serde_secs")]
    pub end: Timestamp,
    pub peak_rate: f64,
    pub window_count: usize,
}

impl BurstEvent {
    pub fn span(&self) -> Span {
        Span {
            start: self.start,
            end: self.end,
        }
    }
}

/// Maximal runs `[first, last]` of windows above `threshold` with length
/// at least `min_len`.
fn runs(windows: &[TimeWindow], threshold: f64, min_len: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, w) in windows.iter().enumerate() {
        match (w.rate > threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s >= min_len {
                    out.push((s, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        if windows.len() - s >= min_len {
            out.push((s, windows.len() - 1));
        }
    }
    out
}

fn events_from_windows(device: &DeviceAddress, windows: &[TimeWindow], params: &BurstParams) -> Vec<BurstEvent> {
    runs(windows, params.rate_threshold, params.consecutive)
        .into_iter()
        .map(|(a, b)| BurstEvent {
            device: *device,
            start: windows[a].start,
            end: windows[b].end(),
            peak_rate: windows[a..=b].iter().map(|w| w.rate).fold(f64::MIN, f64::max),
            window_count: b - a + 1,
        })
        .collect()
}

/// One event per maximal run of at least `consecutive` windows whose rate
/// exceeds the threshold.
pub fn detect_bursts(trace: &DeviceTrace, params: &BurstParams) -> Result<Vec<BurstEvent>, BurstError> {
    params.validate()?;
    let windows = split_windows(trace, params.window_secs, params.direction)?;
    Ok(events_from_windows(trace.device(), &windows, params))
}

/// Per-window flags: true for windows inside a detected run.
pub fn flagged_windows(windows: &[TimeWindow], threshold: f64, consecutive: usize) -> Vec<bool> {
    let mut flags = vec![false; windows.len()];
    for (a, b) in runs(windows, threshold, consecutive) {
        flags[a..=b].iter_mut().for_each(|f| *f = true);
    }
    flags
}

/// Detection quality of one parameter set on one device.
///
/// Labels are matched at event level (a label is detected when any burst
/// event overlaps it); false positives are counted per window among the
/// windows that overlap no label. False events are reported alongside.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurstScore {
    pub counts: ConfusionCounts,
    pub false_events: u64,
    pub events: u64,
}

fn score_device(windows: &[TimeWindow], device: &DeviceAddress, labels: &[Span], params: &BurstParams) -> BurstScore {
    let events = events_from_windows(device, windows, params);
    let flags = flagged_windows(windows, params.rate_threshold, params.consecutive);
    let mut counts = ConfusionCounts::default();
    for l in labels {
        if events.iter().any(|e| e.span().overlaps(l)) {
            counts.tp += 1;
        } else {
            counts.fn_ += 1;
        }
    }
    for (w, &flag) in windows.iter().zip(&flags) {
        let span = w.span();
        if labels.iter().any(|l| l.overlaps(&span)) {
            continue;
        }
        if flag {
            counts.fp += 1;
        } else {
            counts.tn += 1;
        }
    }
    let false_events = events
        .iter()
        .filter(|e| !labels.iter().any(|l| l.overlaps(&e.span())))
        .count() as u64;
    BurstScore {
        counts,
        false_events,
        events: events.len() as u64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: usize,
    pub tpr: f64,
    pub fpr: f64,
    pub score: BurstScore,
}

/// Evaluates `consecutive = n` for each n in the range on labeled traces.
/// An empty label set makes the TPR NaN.
pub fn sweep_n(
    set: &LabeledTraceSet,
    base: &BurstParams,
    n_range: std::ops::RangeInclusive<usize>,
    averaging: Averaging,
) -> Result<Vec<SweepPoint>, BurstError> {
    base.validate()?;
    if *n_range.start() < 1 || n_range.is_empty() {
        return Err(BurstError::InvalidParameter(format!("bad n range {n_range:?}")));
    }
    let per_device: Vec<(DeviceAddress, Vec<TimeWindow>, Vec<Span>)> = set
        .traces
        .values()
        .map(|t| {
            let labels = set.labels_for(t.device()).map(|l| l.span()).collect();
            split_windows(t, base.window_secs, base.direction).map(|w| (*t.device(), w, labels))
        })
        .collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for n in n_range {
        let params = BurstParams {
            consecutive: n,
            ..*base
        };
        let scores: Vec<BurstScore> = per_device
            .iter()
            .map(|(d, w, l)| score_device(w, d, l, &params))
            .collect();
        let counts: Vec<ConfusionCounts> = scores.iter().map(|s| s.counts).collect();
        let (tpr, fpr) = average_rates(&counts, averaging);
        let mut total = BurstScore::default();
        for s in &scores {
            total.counts.add(&s.counts);
            total.false_events += s.false_events;
            total.events += s.events;
        }
        out.push(SweepPoint {
            n,
            tpr,
            fpr,
            score: total,
        });
    }
    Ok(out)
}

/// Scores a single parameter set over all labeled traces.
pub fn evaluate(set: &LabeledTraceSet, params: &BurstParams, averaging: Averaging) -> Result<SweepPoint, BurstError> {
    let n = params.consecutive;
    Ok(sweep_n(set, params, n..=n, averaging)?.remove(0))
}
