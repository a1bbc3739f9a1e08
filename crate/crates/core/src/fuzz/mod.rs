//! Wake-word fuzzing: pick dictionary words with a phoneme count close to
//! the real wake word, try each against an activation oracle, and measure
//! how phonetically far the words that worked are from the target.

mod campaign;
mod dict;
mod levenshtein;
mod metaphone;

use thiserror::Error;

pub use campaign::{
    distance_histogram, is_discovered, run_campaign, ActivationOracle, ActivationTable, FuzzReport, SensorLogOracle,
    SimulatedOracle, TrialOutcome, ALEXA_ACTIVATIONS, DEFAULT_TRIALS, DISCOVERY_FRACTION, OBSERVATION_SECS,
    TIMEOUT_RETRIES,
};
pub use dict::{
    candidates_for, fixture_dictionary, load_dictionary, parse_dictionary, select_by_counts, select_candidates,
    ParseReport, PronunciationEntry, WakeWordCandidate, FIXTURE_DICT,
};
pub use levenshtein::levenshtein;
pub use metaphone::metaphone;

#[derive(Debug, Error)]
pub enum FuzzError {
    #[error("`{word}` is not in the dictionary; nearest: {}", nearest.join(", "))]
    UnknownWord { word: String, nearest: Vec<String> },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("activation table: {0}")]
    Table(String),
    #[error("oracle: {0}")]
    Oracle(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
