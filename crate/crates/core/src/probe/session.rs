//! Session control loop: alternate idle and probe windows, play the words,
//! and collect what the devices sent meanwhile.

use std::collections::BTreeMap;
use std::process::Command;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::plan::{ProbePlan, ProbeWord};
use super::ProbeError;
use crate::capture::live::{FramePoll, FrameSource};
use crate::capture::{CaptureError, LocalNetwork, TraceAssembler, TraceRecord};
use crate::model::{serde_secs, DeviceAddress, DeviceTrace, Span, Timestamp};

/// Time source shared by the control loop, the sink and the capture.
pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
    /// Blocks until `t` (returns at once if `t` has passed).
    fn sleep_until(&self, t: Timestamp);
}

/// Wall-clock time (microseconds since the Unix epoch at construction)
/// advanced by a monotonic timer.
pub struct MonotonicClock {
    origin: Instant,
    epoch: Timestamp,
}

impl MonotonicClock {
    pub fn new() -> Self {
        let since = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
        MonotonicClock {
            origin: Instant::now(),
            epoch: Timestamp::from_micros(since.as_micros() as u64),
        }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now(&self) -> Timestamp {
        self.epoch.add_micros(self.origin.elapsed().as_micros() as u64)
    }

    fn sleep_until(&self, t: Timestamp) {
        let now = self.now();
        if t > now {
            thread::sleep(Duration::from_micros(t.micros_since(now)));
        }
    }
}

/// Simulated time that only moves when someone waits. Clones share state.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock(Arc<AtomicU64>);

impl VirtualClock {
    pub fn new(start: Timestamp) -> Self {
        VirtualClock(Arc::new(AtomicU64::new(start.as_micros())))
    }

    pub fn advance_secs(&self, secs: f64) {
        let us = crate::model::secs_to_micros(secs);
        self.0.fetch_add(us, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Timestamp {
        Timestamp::from_micros(self.0.load(Ordering::SeqCst))
    }

    fn sleep_until(&self, t: Timestamp) {
        self.0.fetch_max(t.as_micros(), Ordering::SeqCst);
    }
}

/// Measured start and end of one playback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Playback {
    #[serde(with = "serde_secs")]
    pub start: Timestamp,
    #[serde(with = "serde_secs")]
    pub end: Timestamp,
}

/// Something that plays a probe word and blocks until it has finished.
pub trait AudioSink {
    fn play(&mut self, word: &ProbeWord, clock: &dyn Clock) -> Result<Playback, ProbeError>;
}

/// Plays audio files through an external player, e.g. `aplay -q`.
pub struct CommandSink {
    pub program: String,
    pub args: Vec<String>,
}

impl CommandSink {
    /// Splits a command line on whitespace.
    pub fn parse(command: &str) -> Result<Self, ProbeError> {
        let mut parts = command.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| ProbeError::Sink("empty player command".into()))?;
        Ok(CommandSink {
            program,
            args: parts.collect(),
        })
    }
}

impl AudioSink for CommandSink {
    fn play(&mut self, word: &ProbeWord, clock: &dyn Clock) -> Result<Playback, ProbeError> {
        let audio = word
            .audio
            .as_ref()
            .ok_or_else(|| ProbeError::Sink(format!("word {:?} has no audio file", word.text)))?;
        let start = clock.now();
        let status = Command::new(&self.program)
            .args(&self.args)
            .arg(audio)
            .status()
            .map_err(|e| ProbeError::Sink(format!("{}: {e}", self.program)))?;
        let end = clock.now();
        if !status.success() {
            return Err(ProbeError::Sink(format!("{} exited with {status}", self.program)));
        }
        Ok(Playback { start, end })
    }
}

/// Captures traffic for the duration of a session.
pub trait SessionCapture {
    fn begin(&mut self, at: Timestamp) -> Result<(), ProbeError>;
    fn finish(&mut self, at: Timestamp) -> Result<BTreeMap<DeviceAddress, DeviceTrace>, ProbeError>;
    /// Human-readable device names, when known.
    fn device_names(&self) -> BTreeMap<DeviceAddress, String> {
        BTreeMap::new()
    }
}

/// Runs a frame source on a background thread while the session plays.
pub struct LiveCapture {
    source: Option<Box<dyn FrameSource>>,
    local: LocalNetwork,
    stop: Arc<AtomicBool>,
    worker: Option<JoinHandle<Result<TraceAssembler, CaptureError>>>,
    start: Timestamp,
}

impl LiveCapture {
    pub fn new(source: Box<dyn FrameSource>, local: LocalNetwork) -> Self {
        LiveCapture {
            source: Some(source),
            local,
            stop: Arc::new(AtomicBool::new(false)),
            worker: None,
            start: Timestamp::ZERO,
        }
    }
}

impl SessionCapture for LiveCapture {
    fn begin(&mut self, at: Timestamp) -> Result<(), ProbeError> {
        let mut source = self
            .source
            .take()
            .ok_or_else(|| ProbeError::Capture("capture already started".into()))?;
        let mut asm = TraceAssembler::new(self.local.clone()).map_err(|e| ProbeError::Capture(e.to_string()))?;
        let stop = Arc::clone(&self.stop);
        self.start = at;
        self.worker = Some(thread::spawn(move || {
            loop {
                match source.poll_frame()? {
                    FramePoll::Frame(f) => asm.push(&f),
                    FramePoll::Pending if stop.load(Ordering::SeqCst) => break,
                    FramePoll::Pending => thread::sleep(Duration::from_millis(5)),
                    FramePoll::Closed => break,
                }
            }
            Ok(asm)
        }));
        Ok(())
    }

    fn finish(&mut self, at: Timestamp) -> Result<BTreeMap<DeviceAddress, DeviceTrace>, ProbeError> {
        self.stop.store(true, Ordering::SeqCst);
        let worker = self
            .worker
            .take()
            .ok_or_else(|| ProbeError::Capture("capture was not started".into()))?;
        let asm = worker
            .join()
            .map_err(|_| ProbeError::Capture("capture thread panicked".into()))?
            .map_err(|e| ProbeError::Capture(e.to_string()))?;
        let span = Span::new(self.start, at.max(self.start))?;
        let (traces, _) = asm.finish(Some(span)).map_err(|e| ProbeError::Capture(e.to_string()))?;
        Ok(traces)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindowKind {
    Idle,
    Probe { word: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    #[serde(flatten)]
    pub kind: WindowKind,
    pub word_index: usize,
    pub repetition: usize,
    #[serde(with = "serde_secs")]
    pub start: Timestamp,
    #[serde(with = "serde_secs")]
    pub end: Timestamp,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub emissions: Vec<Playback>,
}

impl TimelineEntry {
    pub fn span(&self) -> Span {
        Span {
            start: self.start,
            end: self.end,
        }
    }

    pub fn is_probe(&self) -> bool {
        matches!(self.kind, WindowKind::Probe { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSession {
    pub plan: ProbePlan,
    pub timeline: Vec<TimelineEntry>,
    pub capture: BTreeMap<DeviceAddress, DeviceTrace>,
    /// Set when the sink failed; only fully completed words are kept.
    pub partial: bool,
    pub failure: Option<String>,
    pub names: BTreeMap<DeviceAddress, String>,
}

impl ProbeSession {
    /// Words with a complete set of idle/probe pairs, in plan order.
    pub fn completed_words(&self) -> Vec<(usize, String)> {
        let mut out: Vec<(usize, String)> = Vec::new();
        for e in &self.timeline {
            if let WindowKind::Probe { word } = &e.kind {
                if out.last().map(|(i, _)| *i) != Some(e.word_index) {
                    out.push((e.word_index, word.clone()));
                }
            }
        }
        out
    }

    /// Checks the timeline invariants: windows alternate idle/probe, are
    /// contiguous or ordered without overlap, and every emission starts
    /// inside a probe window.
    pub fn audit(&self) -> Result<(), String> {
        for (i, e) in self.timeline.iter().enumerate() {
            if e.end < e.start {
                return Err(format!("window {i} ends before it starts"));
            }
            if e.is_probe() != (i % 2 == 1) {
                return Err(format!("window {i} breaks the idle/probe alternation"));
            }
            if i > 0 && self.timeline[i - 1].end > e.start {
                return Err(format!("window {i} overlaps its predecessor"));
            }
            if !e.is_probe() && !e.emissions.is_empty() {
                return Err(format!("idle window {i} holds emissions"));
            }
            if let Some(p) = e
                .emissions
                .iter()
                .find(|p| !e.span().contains(p.start) || p.start == e.end)
            {
                return Err(format!("emission at {} outside probe window {i}", p.start));
            }
        }
        Ok(())
    }
}

/// Serialized session.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionFile {
    pub plan: ProbePlan,
    pub partial: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub timeline: Vec<TimelineEntry>,
    #[serde(default)]
    pub names: BTreeMap<String, String>,
    pub capture: Vec<TraceRecord>,
}

impl From<&ProbeSession> for SessionFile {
    fn from(s: &ProbeSession) -> Self {
        SessionFile {
            plan: s.plan.clone(),
            partial: s.partial,
            failure: s.failure.clone(),
            timeline: s.timeline.clone(),
            names: s
                .names
                .iter()
                .map(|(d, n)| (d.hardware_id.to_string(), n.clone()))
                .collect(),
            capture: s.capture.values().map(TraceRecord::from).collect(),
        }
    }
}

impl TryFrom<SessionFile> for ProbeSession {
    type Error = ProbeError;

    fn try_from(f: SessionFile) -> Result<Self, Self::Error> {
        let capture = crate::capture::traces_from_records(f.capture).map_err(|e| ProbeError::Capture(e.to_string()))?;
        let names = f
            .names
            .into_iter()
            .map(|(mac, n)| {
                mac.parse::<DeviceAddress>()
                    .map(|d| (d, n))
                    .map_err(|e| ProbeError::InvalidPlan(format!("bad device {mac:?} in names: {e}")))
            })
            .collect::<Result<_, _>>()?;
        Ok(ProbeSession {
            plan: f.plan,
            timeline: f.timeline,
            capture,
            partial: f.partial,
            failure: f.failure,
            names,
        })
    }
}

/// Plays the plan: for every word and repetition, one idle window followed
/// by one probe window in which the word is emitted every `repeat_every`
/// seconds. A sink failure stops the session; the word in progress is
/// dropped and the session is marked partial.
pub fn run_session(
    plan: &ProbePlan,
    sink: &mut dyn AudioSink,
    capture: &mut dyn SessionCapture,
    clock: &dyn Clock,
) -> Result<ProbeSession, ProbeError> {
    plan.validate()?;
    let window_us = crate::model::secs_to_micros(plan.window_d);
    let step_us = crate::model::secs_to_micros(plan.repeat_every);
    let emissions = plan.emissions_per_window();
    capture.begin(clock.now())?;
    let mut timeline = Vec::new();
    let mut failure = None;
    'words: for (wi, word) in plan.words.iter().enumerate() {
        let mut entries = Vec::with_capacity(2 * plan.repetitions);
        for rep in 0..plan.repetitions {
            let idle_start = clock.now();
            let idle_end = idle_start.add_micros(window_us);
            clock.sleep_until(idle_end);
            entries.push(TimelineEntry {
                kind: WindowKind::Idle,
                word_index: wi,
                repetition: rep,
                start: idle_start,
                end: idle_end,
                emissions: Vec::new(),
            });
            let probe_start = clock.now();
            let probe_end = probe_start.add_micros(window_us);
            let mut played = Vec::with_capacity(emissions);
            for k in 0..emissions as u64 {
                clock.sleep_until(probe_start.add_micros(k * step_us));
                match sink.play(word, clock) {
                    Ok(p) => played.push(p),
                    Err(e) => {
                        failure = Some(format!("word {:?}, repetition {}: {e}", word.text, rep + 1));
                        break 'words;
                    }
                }
            }
            clock.sleep_until(probe_end);
            entries.push(TimelineEntry {
                kind: WindowKind::Probe {
                    word: word.text.clone(),
                },
                word_index: wi,
                repetition: rep,
                start: probe_start,
                end: clock.now().max(probe_end),
                emissions: played,
            });
        }
        timeline.extend(entries);
    }
    let capture_map = capture.finish(clock.now())?;
    Ok(ProbeSession {
        plan: plan.clone(),
        timeline,
        capture: capture_map,
        partial: failure.is_some(),
        failure,
        names: capture.device_names(),
    })
}

/// A sink that records each emission and advances a virtual clock by the
/// word's duration. Handy for dry runs and tests.
#[derive(Debug, Clone, Default)]
pub struct RecordingSink {
    pub played: Arc<Mutex<Vec<(String, Playback)>>>,
}

impl AudioSink for RecordingSink {
    fn play(&mut self, word: &ProbeWord, clock: &dyn Clock) -> Result<Playback, ProbeError> {
        let start = clock.now();
        clock.sleep_until(start.add_secs(word.duration));
        let pb = Playback {
            start,
            end: clock.now(),
        };
        self.played
            .lock()
            .expect("sink log poisoned")
            .push((word.text.clone(), pb));
        Ok(pb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct NullCapture;

    impl SessionCapture for NullCapture {
        fn begin(&mut self, _: Timestamp) -> Result<(), ProbeError> {
            Ok(())
        }
        fn finish(&mut self, _: Timestamp) -> Result<BTreeMap<DeviceAddress, DeviceTrace>, ProbeError> {
            Ok(BTreeMap::new())
        }
    }

    struct FailingSink {
        inner: RecordingSink,
        fail_on_word: String,
    }

    impl AudioSink for FailingSink {
        fn play(&mut self, word: &ProbeWord, clock: &dyn Clock) -> Result<Playback, ProbeError> {
            if word.text == self.fail_on_word {
                return Err(ProbeError::Sink("speaker unplugged".into()));
            }
            self.inner.play(word, clock)
        }
    }

    fn plan(words: &[&str], reps: usize) -> ProbePlan {
        let mut p = ProbePlan::new(words.iter().map(|w| ProbeWord::new(*w)).collect());
        p.repetitions = reps;
        p
    }

    #[test]
    fn one_word_one_repetition_gives_two_windows() {
        let clock = VirtualClock::default();
        let s = run_session(
            &plan(&["alexa"], 1),
            &mut RecordingSink::default(),
            &mut NullCapture,
            &clock,
        )
        .unwrap();
        assert_eq!(s.timeline.len(), 2);
        assert_eq!(s.timeline[1].emissions.len(), 6);
        assert_eq!(s.timeline[0].end, s.timeline[1].start);
        assert_eq!(clock.now(), Timestamp::from_secs_f64(120.0));
        s.audit().unwrap();
        assert!(!s.partial);
    }

    #[test]
    fn fifty_words_span_the_plan() {
        let words: Vec<String> = (0..50).map(|i| format!("word{i}")).collect();
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let p = plan(&refs, 3);
        let clock = VirtualClock::default();
        let s = run_session(&p, &mut RecordingSink::default(), &mut NullCapture, &clock).unwrap();
        assert_eq!(s.timeline.len(), 50 * 2 * 3);
        assert_eq!(clock.now().as_secs_f64(), p.total_secs());
        s.audit().unwrap();
    }

    #[test]
    fn sink_failure_keeps_completed_words() {
        let mut sink = FailingSink {
            inner: RecordingSink::default(),
            fail_on_word: "three".into(),
        };
        let clock = VirtualClock::default();
        let s = run_session(
            &plan(&["one", "two", "three", "four", "five"], 3),
            &mut sink,
            &mut NullCapture,
            &clock,
        )
        .unwrap();
        assert!(s.partial);
        assert_eq!(
            s.completed_words(),
            vec![(0, "one".to_string()), (1, "two".to_string())]
        );
        assert_eq!(s.timeline.len(), 2 * 2 * 3);
        assert!(s.failure.unwrap().contains("three"));
    }

    #[test]
    fn audit_catches_misplaced_emission() {
        let clock = VirtualClock::default();
        let mut s = run_session(
            &plan(&["alexa"], 1),
            &mut RecordingSink::default(),
            &mut NullCapture,
            &clock,
        )
        .unwrap();
        let pb = s.timeline[1].emissions[0];
        s.timeline[0].emissions.push(pb);
        assert!(s.audit().is_err());
    }

    #[test]
    fn virtual_clock_never_goes_back() {
        let c = VirtualClock::default();
        c.sleep_until(Timestamp::from_micros(50));
        c.sleep_until(Timestamp::from_micros(10));
        assert_eq!(c.now(), Timestamp::from_micros(50));
    }
}
