//! Distribution-change detection between an idle and a probe window.

pub mod binning;
pub mod compare;
pub mod special;
pub mod ttest;

use thiserror::Error;

pub use binning::{auto_bins, histogram, DistributionVector, Feature};
pub use compare::{compare_windows, fisher_combine, sliding_scan, ProbeComparison, ProbeConfig, ScanPair};
pub use ttest::{count_t_test, t_test, welch_t_test, TTestKind, TTestResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("distribution vectors use different bin edges")]
    EdgeMismatch,
}
