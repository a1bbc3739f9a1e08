//! Synthetic device traffic with ground-truth audio labels.

pub mod fleet;
pub mod generate;
pub mod model;
pub mod scenario;

use thiserror::Error;

pub use fleet::{SimCapture, SimSink, SimulatedFleet};
pub use generate::{simulate, write_pcap, write_pcap_to};
pub use model::{library, library_model, AudioStream, DeviceModel, IdleBurst, MeanSd, CONTROLLED_MODELS};
pub use scenario::{controlled_scenario, EventKind, Scenario, ScenarioEvent};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("device model {0:?}: {1}")]
    InvalidModel(String, String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("no device model named {0:?} in the library")]
    UnknownModel(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}
