//! Probing campaigns: play audio probes, capture traffic, judge devices.

pub mod judge;
pub mod plan;
pub mod report;
pub mod session;

use thiserror::Error;

pub use judge::{judge, DetectionVerdict, Evidence, JudgeConfig, RepetitionRecord, VerdictStatus};
pub use plan::{ProbePlan, ProbeWord};
pub use report::{report, ReportFormat, VerdictReport};
pub use session::{
    run_session, AudioSink, Clock, CommandSink, LiveCapture, MonotonicClock, Playback, ProbeSession, RecordingSink,
    SessionCapture, SessionFile, TimelineEntry, VirtualClock, WindowKind,
};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("audio sink failed: {0}")]
    Sink(String),
    #[error("capture failed: {0}")]
    Capture(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}
