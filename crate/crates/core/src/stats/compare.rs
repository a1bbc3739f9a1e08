//! Idle-versus-probe window comparison and the sliding-window scan.

use serde::{Deserialize, Serialize};

use super::binning::{auto_bins, histogram, Feature};
use super::special::chi2_sf_even;
use super::ttest::{count_t_test, TTestKind, TTestResult};
use super::StatsError;
use crate::model::{secs_to_micros, DeviceTrace, DirectionFilter, PacketRecord, Span, Timestamp};

pub const DEFAULT_THRESHOLD: f64 = 0.42;
pub const DEFAULT_WINDOW_SECS: f64 = 60.0;
pub const DEFAULT_SCAN_WINDOW_SECS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub threshold: f64,
    /// Also test inter-arrival times and combine both p-values.
    pub combine_iat: bool,
    pub test_kind: TTestKind,
    pub direction: DirectionFilter,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            threshold: DEFAULT_THRESHOLD,
            combine_iat: false,
            test_kind: TTestKind::Welch,
            direction: DirectionFilter::Outbound,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<(), StatsError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(StatsError::InvalidParameter(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeComparison {
    pub p_size: f64,
    pub p_iat: Option<f64>,
    pub p_combined: Option<f64>,
    pub t_score: f64,
    pub df: f64,
    pub verdict_threshold: f64,
    pub reactive: bool,
    pub idle_packets: usize,
    pub probe_packets: usize,
}

impl ProbeComparison {
    /// The p-value the verdict is based on.
    pub fn p_value(&self) -> f64 {
        self.p_combined.unwrap_or(self.p_size)
    }
}

/// Fisher's method: -2 Σ ln p is chi-square with 2k degrees of freedom.
pub fn fisher_combine(ps: &[f64]) -> f64 {
    assert!(!ps.is_empty(), "nothing to combine");
    if ps.iter().any(|&p| p <= 0.0) {
        return 0.0;
    }
    let stat = -2.0 * ps.iter().map(|p| p.ln()).sum::<f64>();
    chi2_sf_even(stat, 2 * ps.len() as u32)
}

fn window_packets(trace: &DeviceTrace, span: Span, dir: DirectionFilter) -> Vec<&PacketRecord> {
    trace
        .packets_in(span.start, span.end)
        .iter()
        .filter(|p| dir.accepts(p.direction))
        .collect()
}

fn sizes(packets: &[&PacketRecord]) -> Vec<f64> {
    packets.iter().map(|p| f64::from(p.payload_size)).collect()
}

fn inter_arrivals(packets: &[&PacketRecord]) -> Vec<f64> {
    packets
        .windows(2)
        .map(|w| w[1].timestamp.micros_since(w[0].timestamp) as f64 / 1e6)
        .collect()
}

fn feature_test(idle: &[f64], probe: &[f64], feature: Feature, kind: TTestKind) -> Result<TTestResult, StatsError> {
    let edges = auto_bins(idle)?;
    if edges.len() < 3 {
        return Err(StatsError::InsufficientData(format!(
            "idle {feature:?} values fall in a single bin"
        )));
    }
    let a = histogram(idle, &edges, feature)?;
    let b = histogram(probe, &edges, feature)?;
    count_t_test(&a, &b, kind)
}

/// Compares the probe window against the idle window. Bins come from the
/// idle window and are reused for the probe window.
pub fn compare_windows(
    trace: &DeviceTrace,
    idle: Span,
    probe: Span,
    config: &ProbeConfig,
) -> Result<ProbeComparison, StatsError> {
    config.validate()?;
    if idle.overlaps(&probe) {
        return Err(StatsError::InvalidParameter("idle and probe windows overlap".into()));
    }
    let idle_pk = window_packets(trace, idle, config.direction);
    let probe_pk = window_packets(trace, probe, config.direction);
    if idle_pk.len() < 2 {
        return Err(StatsError::InsufficientData(format!(
            "idle window holds {} packets, need at least 2",
            idle_pk.len()
        )));
    }
    let size = feature_test(
        &sizes(&idle_pk),
        &sizes(&probe_pk),
        Feature::PacketSize,
        config.test_kind,
    )?;

    let (p_iat, p_combined) = if config.combine_iat {
        let idle_iat = inter_arrivals(&idle_pk);
        let probe_iat = inter_arrivals(&probe_pk);
        match feature_test(&idle_iat, &probe_iat, Feature::InterArrival, config.test_kind) {
            Ok(r) => (Some(r.p_value), Some(fisher_combine(&[size.p_value, r.p_value]))),
            // Too few arrivals to bin: fall back to the size test alone.
            Err(_) => (None, None),
        }
    } else {
        (None, None)
    };
    let p_used = p_combined.unwrap_or(size.p_value);
    Ok(ProbeComparison {
        p_size: size.p_value,
        p_iat,
        p_combined,
        t_score: size.t_score,
        df: size.df,
        verdict_threshold: config.threshold,
        reactive: p_used < config.threshold,
        idle_packets: idle_pk.len(),
        probe_packets: probe_pk.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPair {
    /// Start of the reference window.
    pub start: Timestamp,
    /// Boundary between the reference and the compared window.
    pub mid: Timestamp,
    pub end: Timestamp,
    /// `None` when the reference window has too little data.
    pub comparison: Option<ProbeComparison>,
}

impl ScanPair {
    pub fn reference(&self) -> Span {
        Span {
            start: self.start,
            end: self.mid,
        }
    }

    pub fn compared(&self) -> Span {
        Span {
            start: self.mid,
            end: self.end,
        }
    }

    pub fn span(&self) -> Span {
        Span {
            start: self.start,
            end: self.end,
        }
    }

    pub fn p_value(&self) -> Option<f64> {
        self.comparison.map(|c| c.p_value())
    }

    pub fn reactive(&self) -> bool {
        self.comparison.is_some_and(|c| c.reactive)
    }

    /// Verdict at another threshold, reusing the computed p-value.
    pub fn reactive_at(&self, threshold: f64) -> bool {
        self.p_value().is_some_and(|p| p < threshold)
    }
}

/// Tiles the trace into full windows of `window_secs` and compares every
/// window with the one before it.
pub fn sliding_scan(trace: &DeviceTrace, window_secs: f64, config: &ProbeConfig) -> Result<Vec<ScanPair>, StatsError> {
    if !(window_secs > 0.0 && window_secs.is_finite()) {
        return Err(StatsError::InvalidParameter(format!(
            "scan window {window_secs} must be > 0"
        )));
    }
    config.validate()?;
    let width = secs_to_micros(window_secs);
    if width == 0 {
        return Err(StatsError::InvalidParameter(
            "scan window below timestamp resolution".into(),
        ));
    }
    let span = trace.span();
    let full = (span.len_micros() / width) as usize;
    let mut out = Vec::with_capacity(full.saturating_sub(1));
    for i in 0..full.saturating_sub(1) {
        let start = span.start.add_micros(width * i as u64);
        let mid = start.add_micros(width);
        let end = mid.add_micros(width);
        let comparison = match compare_windows(trace, Span { start, end: mid }, Span { start: mid, end }, config) {
            Ok(c) => Some(c),
            Err(StatsError::InsufficientData(_)) => None,
            Err(e) => return Err(e),
        };
        out.push(ScanPair {
            start,
            mid,
            end,
            comparison,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DeviceAddress, Direction, MacAddr};

    fn dev() -> DeviceAddress {
        DeviceAddress::from(MacAddr([2, 0, 0, 0, 0, 9]))
    }

    fn trace(pkts: &[(f64, u32)], len: f64) -> DeviceTrace {
        let packets = pkts
            .iter()
            .map(|&(t, s)| PacketRecord {
                timestamp: Timestamp::from_secs_f64(t),
                payload_size: s,
                device: dev(),
                direction: Direction::Outbound,
            })
            .collect();
        DeviceTrace::from_unsorted(dev(), packets, Span::from_secs(0.0, len).unwrap()).unwrap()
    }

    fn idle_like(offset: f64) -> Vec<(f64, u32)> {
        (0..40)
            .map(|i| {
                (
                    offset + i as f64 * 1.4 + (i * 7 % 5) as f64 * 0.1,
                    80 + (i * 37 % 1300) as u32,
                )
            })
            .collect()
    }

    #[test]
    fn fisher_matches_closed_form() {
        let (a, b) = (0.3f64, 0.02f64);
        let expect = a * b * (1.0 - (a * b).ln());
        assert!((fisher_combine(&[a, b]) - expect).abs() < 1e-15);
        assert_eq!(fisher_combine(&[1.0, 1.0]), 1.0);
        assert_eq!(fisher_combine(&[0.0, 0.5]), 0.0);
    }

    #[test]
    fn audio_burst_lowers_p() {
        let mut pk = idle_like(0.0);
        pk.extend(idle_like(60.0));
        pk.extend((0..400).map(|i| (65.0 + i as f64 * 0.02, 900 + (i * 53 % 560) as u32)));
        let t = trace(&pk, 120.0);
        let cfg = ProbeConfig::default();
        let c = compare_windows(
            &t,
            Span::from_secs(0.0, 60.0).unwrap(),
            Span::from_secs(60.0, 120.0).unwrap(),
            &cfg,
        )
        .unwrap();
        assert!(c.p_size < 0.3, "{c:?}");
        assert!(c.reactive);
        let same = compare_windows(
            &t,
            Span::from_secs(0.0, 60.0).unwrap(),
            Span::from_secs(0.0, 60.0).unwrap(),
            &cfg,
        );
        assert!(same.is_err());
    }

    #[test]
    fn threshold_zero_is_never_reactive() {
        let mut pk = idle_like(0.0);
        pk.extend((0..400).map(|i| (65.0 + i as f64 * 0.02, 1000 + i % 400)));
        let t = trace(&pk, 120.0);
        let cfg = ProbeConfig {
            threshold: 0.0,
            ..ProbeConfig::default()
        };
        let c = compare_windows(
            &t,
            Span::from_secs(0.0, 60.0).unwrap(),
            Span::from_secs(60.0, 120.0).unwrap(),
            &cfg,
        )
        .unwrap();
        assert!(!c.reactive);
    }

    #[test]
    fn sparse_idle_window_is_insufficient() {
        let t = trace(&[(1.0, 100), (70.0, 100)], 120.0);
        let r = compare_windows(
            &t,
            Span::from_secs(0.0, 60.0).unwrap(),
            Span::from_secs(60.0, 120.0).unwrap(),
            &ProbeConfig::default(),
        );
        assert!(matches!(r, Err(StatsError::InsufficientData(_))));
    }

    #[test]
    fn scan_pair_counts() {
        let t = trace(&idle_like(0.0), 60.0);
        assert_eq!(sliding_scan(&t, 30.0, &ProbeConfig::default()).unwrap().len(), 1);
        let t = trace(&idle_like(0.0), 59.0);
        assert!(sliding_scan(&t, 30.0, &ProbeConfig::default()).unwrap().is_empty());
        let t = trace(&idle_like(0.0), 150.0);
        let pairs = sliding_scan(&t, 30.0, &ProbeConfig::default()).unwrap();
        assert_eq!(pairs.len(), 4);
        assert_eq!(pairs[1].start, Timestamp::from_secs_f64(30.0));
        assert!(sliding_scan(&t, 0.0, &ProbeConfig::default()).is_err());
    }

    #[test]
    fn combined_mode_reports_iat() {
        let mut pk = idle_like(0.0);
        pk.extend((0..300).map(|i| (61.0 + i as f64 * 0.05, 900 + (i * 53 % 560) as u32)));
        let t = trace(&pk, 120.0);
        let cfg = ProbeConfig {
            combine_iat: true,
            ..ProbeConfig::default()
        };
        let c = compare_windows(
            &t,
            Span::from_secs(0.0, 60.0).unwrap(),
            Span::from_secs(60.0, 120.0).unwrap(),
            &cfg,
        )
        .unwrap();
        assert!(c.p_iat.is_some());
        assert_eq!(c.p_combined, Some(fisher_combine(&[c.p_size, c.p_iat.unwrap()])));
    }
}
