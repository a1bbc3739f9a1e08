//! Per-device verdicts from a recorded session.

use serde::{Deserialize, Serialize};

use super::session::{ProbeSession, WindowKind};
use crate::burst::{detect_bursts, BurstEvent, BurstParams};
use crate::model::{serde_secs, DeviceAddress, DeviceTrace, Span, Timestamp};
use crate::stats::{compare_windows, ProbeComparison, ProbeConfig, StatsError};

/// Seconds trimmed from both ends of an idle window.
pub const IDLE_GUARD_SECS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Reactive,
    NotReactive,
    /// No packets at all in any window of the word.
    Silent,
    /// Too few usable repetitions to form a majority.
    InsufficientData,
}

impl VerdictStatus {
    pub fn label(self) -> &'static str {
        match self {
            VerdictStatus::Reactive => "reactive",
            VerdictStatus::NotReactive => "not reactive",
            VerdictStatus::Silent => "silent",
            VerdictStatus::InsufficientData => "insufficient data",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRecord {
    pub repetition: usize,
    #[serde(with = "serde_secs")]
    pub idle_start: Timestamp,
    #[serde(with = "serde_secs")]
    pub idle_end: Timestamp,
    #[serde(with = "serde_secs")]
    pub probe_start: Timestamp,
    #[serde(with = "serde_secs")]
    pub probe_end: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ProbeComparison>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub bursts: Vec<BurstEvent>,
    pub comparisons: Vec<RepetitionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionVerdict {
    pub device: DeviceAddress,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub word: String,
    /// One per repetition; `None` where the comparison had too little data.
    pub p_values: Vec<Option<f64>>,
    pub status: VerdictStatus,
    pub reactive: bool,
    pub evidence: Evidence,
}

/// Repetitions that must fall below the threshold.
pub fn majority(repetitions: usize) -> usize {
    repetitions / 2 + 1
}

fn device_selected(session: &ProbeSession, device: &DeviceAddress) -> bool {
    let Some(allow) = &session.plan.devices else {
        return true;
    };
    let mac = device.hardware_id.to_string();
    let name = session.names.get(device);
    allow
        .iter()
        .any(|a| a.eq_ignore_ascii_case(&mac) || name.is_some_and(|n| n.eq_ignore_ascii_case(a)))
}

/// Devices named in the allow-list by MAC that never showed up in the
/// capture; they are judged on an empty trace.
fn missing_devices(session: &ProbeSession) -> Vec<DeviceAddress> {
    let Some(allow) = &session.plan.devices else {
        return Vec::new();
    };
    allow
        .iter()
        .filter_map(|a| a.parse::<DeviceAddress>().ok())
        .filter(|d| !session.capture.contains_key(d))
        .collect()
}

fn trimmed_idle(span: Span) -> Span {
    let guard = crate::model::secs_to_micros(IDLE_GUARD_SECS);
    if span.len_micros() <= 2 * guard {
        return span;
    }
    Span {
        start: span.start.add_micros(guard),
        end: span.end.sub_micros(guard),
    }
}

/// Options for turning comparisons into verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub probe: ProbeConfig,
    /// Count a repetition as reactive only when the probe window also holds
    /// more packets than the idle window. Audio streaming adds traffic; a
    /// drop in traffic (an idle-window burst) is not a reaction.
    pub require_increase: bool,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        JudgeConfig {
            probe: ProbeConfig::default(),
            require_increase: true,
        }
    }
}

impl JudgeConfig {
    pub fn with_threshold(threshold: f64) -> Self {
        let mut c = JudgeConfig::default();
        c.probe.threshold = threshold;
        c
    }

    fn counts_as_reactive(&self, c: &ProbeComparison) -> bool {
        c.reactive && (!self.require_increase || c.probe_packets > c.idle_packets)
    }
}

fn judge_device(
    session: &ProbeSession,
    trace: &DeviceTrace,
    word_index: usize,
    word: &str,
    judge_config: &JudgeConfig,
    bursts: &[BurstEvent],
) -> DetectionVerdict {
    let config = &judge_config.probe;
    let windows: Vec<_> = session.timeline.iter().filter(|e| e.word_index == word_index).collect();
    let silent = windows.iter().all(|w| trace.packets_in(w.start, w.end).is_empty());
    let mut records = Vec::new();
    let mut p_values = Vec::new();
    let mut probe_spans = Vec::new();
    for pair in windows.chunks(2) {
        let [idle, probe] = pair else { continue };
        debug_assert!(matches!(idle.kind, WindowKind::Idle));
        let idle_span = trimmed_idle(idle.span());
        let probe_from = probe.emissions.first().map_or(probe.start, |e| e.start);
        let probe_span = Span {
            start: probe_from,
            end: probe.end,
        };
        probe_spans.push(probe.span());
        let (comparison, error) = if silent {
            (None, None)
        } else {
            match compare_windows(trace, idle_span, probe_span, config) {
                Ok(c) => (Some(c), None),
                Err(e @ StatsError::InsufficientData(_)) => (None, Some(e.to_string())),
                Err(e) => (None, Some(e.to_string())),
            }
        };
        p_values.push(comparison.map(|c| c.p_value()));
        records.push(RepetitionRecord {
            repetition: probe.repetition,
            idle_start: idle_span.start,
            idle_end: idle_span.end,
            probe_start: probe_span.start,
            probe_end: probe_span.end,
            comparison,
            error,
        });
    }
    let needed = majority(p_values.len());
    let valid = p_values.iter().flatten().count();
    let below = records
        .iter()
        .filter_map(|r| r.comparison.as_ref())
        .filter(|c| judge_config.counts_as_reactive(c))
        .count();
    let status = if silent {
        VerdictStatus::Silent
    } else if below >= needed {
        VerdictStatus::Reactive
    } else if valid < needed {
        VerdictStatus::InsufficientData
    } else {
        VerdictStatus::NotReactive
    };
    DetectionVerdict {
        device: *trace.device(),
        name: session.names.get(trace.device()).cloned(),
        word: word.to_string(),
        p_values,
        status,
        reactive: status == VerdictStatus::Reactive,
        evidence: Evidence {
            bursts: bursts
                .iter()
                .filter(|b| probe_spans.iter().any(|s| s.overlaps(&b.span())))
                .cloned()
                .collect(),
            comparisons: records,
        },
    }
}

/// Compares every probe window with the idle window before it, per device
/// and word, and takes a majority vote over the repetitions.
pub fn judge(session: &ProbeSession, config: &JudgeConfig) -> Vec<DetectionVerdict> {
    let words = session.completed_words();
    let span = session
        .timeline
        .first()
        .zip(session.timeline.last())
        .map(|(a, b)| Span {
            start: a.start,
            end: b.end,
        });
    let mut traces: Vec<DeviceTrace> = session
        .capture
        .values()
        .filter(|t| device_selected(session, t.device()))
        .cloned()
        .collect();
    if let Some(span) = span {
        for d in missing_devices(session) {
            traces.push(DeviceTrace::empty(d, span));
        }
    }
    let mut out = Vec::new();
    for trace in &traces {
        let bursts = detect_bursts(trace, &BurstParams::default()).unwrap_or_default();
        for (wi, word) in &words {
            out.push(judge_device(session, trace, *wi, word, config, &bursts));
        }
    }
    out
}
