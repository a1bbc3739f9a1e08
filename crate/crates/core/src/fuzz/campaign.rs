//! Activation oracles and the trial loop.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dict::WakeWordCandidate;
use super::FuzzError;
use crate::model::Timestamp;
use crate::probe::{AudioSink, Clock, ProbeWord};

/// Activation probabilities measured for Alexa, one word per line.
pub const ALEXA_ACTIVATIONS: &str = include_str!("../../data/alexa-activations.tsv");

pub const DEFAULT_TRIALS: u32 = 10;
/// Retries after a timed-out trial before giving the trial up.
pub const TIMEOUT_RETRIES: u32 = 2;
/// Smallest activation fraction that counts as a discovered wake word.
pub const DISCOVERY_FRACTION: f64 = 0.2;
pub const OBSERVATION_SECS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialOutcome {
    Activated,
    NotActivated,
    Timeout,
}

/// Anything that can say whether a device reacted to one utterance.
pub trait ActivationOracle {
    fn try_word(&mut self, word: &str) -> Result<TrialOutcome, FuzzError>;
    /// Called after every trial; real devices need time to go back to
    /// listening.
    fn cooldown(&mut self) {}
}

/// Word → activation probability.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActivationTable(pub BTreeMap<String, f64>);

impl ActivationTable {
    /// Parses `word<TAB>probability` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, FuzzError> {
        let mut map = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || FuzzError::Table(format!("line {}: expected `word<TAB>probability`", no + 1));
            let mut parts = line.split('\t');
            let word = parts.next().filter(|w| !w.is_empty()).ok_or_else(bad)?;
            let p: f64 = parts.next().and_then(|p| p.trim().parse().ok()).ok_or_else(bad)?;
            if !(0.0..=1.0).contains(&p) || parts.next().is_some() {
                return Err(bad());
            }
            map.insert(word.trim().to_ascii_lowercase(), p);
        }
        Ok(ActivationTable(map))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FuzzError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn alexa() -> Self {
        Self::parse(ALEXA_ACTIVATIONS).expect("shipped table parses")
    }

    pub fn probability(&self, word: &str) -> f64 {
        self.0.get(&word.to_ascii_lowercase()).copied().unwrap_or(0.0)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Simulated device that activates with the table's probability.
pub struct SimulatedOracle {
    table: ActivationTable,
    rng: ChaCha8Rng,
    timeout_rate: f64,
}

impl SimulatedOracle {
    pub fn new(table: ActivationTable, seed: u64) -> Self {
        SimulatedOracle {
            table,
            rng: ChaCha8Rng::seed_from_u64(seed),
            timeout_rate: 0.0,
        }
    }

    /// Makes a fraction of trials time out, to exercise retries.
    pub fn with_timeout_rate(mut self, rate: f64) -> Self {
        self.timeout_rate = rate.clamp(0.0, 1.0);
        self
    }
}

impl ActivationOracle for SimulatedOracle {
    fn try_word(&mut self, word: &str) -> Result<TrialOutcome, FuzzError> {
        if self.timeout_rate > 0.0 && self.rng.random::<f64>() < self.timeout_rate {
            return Ok(TrialOutcome::Timeout);
        }
        let p = self.table.probability(word);
        Ok(if self.rng.random::<f64>() < p {
            TrialOutcome::Activated
        } else {
            TrialOutcome::NotActivated
        })
    }
}

/// Plays each word through a sink and looks for an activation line in a
/// sensor log that an external process keeps appending.
///
/// Log lines are `<unix seconds> <event>`; the event `activated` marks a
/// reaction, any other event only shows that the sensor is alive. A trial
/// whose observation window is not followed by any log line times out.
pub struct SensorLogOracle<'a> {
    log: PathBuf,
    audio_dir: PathBuf,
    sink: &'a mut dyn AudioSink,
    clock: &'a dyn Clock,
    observation_secs: f64,
    cooldown_secs: f64,
    grace_secs: f64,
}

impl<'a> SensorLogOracle<'a> {
    pub fn new(
        log: impl Into<PathBuf>,
        audio_dir: impl Into<PathBuf>,
        sink: &'a mut dyn AudioSink,
        clock: &'a dyn Clock,
    ) -> Self {
        SensorLogOracle {
            log: log.into(),
            audio_dir: audio_dir.into(),
            sink,
            clock,
            observation_secs: OBSERVATION_SECS,
            cooldown_secs: 5.0,
            grace_secs: 1.0,
        }
    }

    pub fn with_cooldown(mut self, secs: f64) -> Self {
        self.cooldown_secs = secs.max(0.0);
        self
    }

    fn read_events(&self) -> Result<Vec<(Timestamp, bool)>, FuzzError> {
        let text = match fs::read_to_string(&self.log) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        Ok(text
            .lines()
            .filter_map(|l| {
                let mut it = l.split_whitespace();
                let t: f64 = it.next()?.parse().ok()?;
                let ev = it.next()?;
                (t >= 0.0).then(|| (Timestamp::from_secs_f64(t), ev.eq_ignore_ascii_case("activated")))
            })
            .collect())
    }
}

impl ActivationOracle for SensorLogOracle<'_> {
    fn try_word(&mut self, word: &str) -> Result<TrialOutcome, FuzzError> {
        let audio = self.audio_dir.join(format!("{}.wav", word.replace(' ', "_")));
        let mut probe = ProbeWord::new(word);
        probe.audio = Some(audio);
        let played = self
            .sink
            .play(&probe, self.clock)
            .map_err(|e| FuzzError::Oracle(e.to_string()))?;
        let window_end = played.end.add_secs(self.observation_secs);
        self.clock.sleep_until(window_end.add_secs(self.grace_secs));
        let events = self.read_events()?;
        if !events.iter().any(|(t, _)| *t >= window_end) {
            return Ok(TrialOutcome::Timeout);
        }
        let hit = events
            .iter()
            .any(|(t, act)| *act && *t >= played.start && *t <= window_end);
        Ok(if hit {
            TrialOutcome::Activated
        } else {
            TrialOutcome::NotActivated
        })
    }

    fn cooldown(&mut self) {
        self.clock.sleep_until(self.clock.now().add_secs(self.cooldown_secs));
    }
}

/// Tries every candidate `trials_per_word` times, strictly one after the
/// other. Timed-out trials are retried up to [`TIMEOUT_RETRIES`] times and
/// dropped if they keep timing out.
pub fn run_campaign(
    candidates: &[WakeWordCandidate],
    oracle: &mut dyn ActivationOracle,
    trials_per_word: u32,
) -> Result<Vec<WakeWordCandidate>, FuzzError> {
    if trials_per_word == 0 {
        return Err(FuzzError::InvalidParameter("trials per word must be positive".into()));
    }
    let mut out = Vec::with_capacity(candidates.len());
    for c in candidates {
        let mut c = c.clone();
        c.trials = 0;
        c.activations = 0;
        for _ in 0..trials_per_word {
            for _ in 0..=TIMEOUT_RETRIES {
                let outcome = oracle.try_word(&c.word)?;
                oracle.cooldown();
                match outcome {
                    TrialOutcome::Timeout => continue,
                    TrialOutcome::Activated => c.activations += 1,
                    TrialOutcome::NotActivated => {}
                }
                c.trials += 1;
                break;
            }
        }
        out.push(c);
    }
    Ok(out)
}

pub fn is_discovered(c: &WakeWordCandidate) -> bool {
    c.activations > 0 && f64::from(c.activations) >= DISCOVERY_FRACTION * f64::from(c.trials) - 1e-9
}

/// Count of words per phonetic distance.
pub fn distance_histogram<'c>(results: impl IntoIterator<Item = &'c WakeWordCandidate>) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for c in results {
        *h.entry(c.distance).or_insert(0) += 1;
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzReport {
    pub target: String,
    pub target_metaphone: String,
    pub trials_per_word: u32,
    pub candidates: Vec<WakeWordCandidate>,
    pub discovered: Vec<String>,
    /// Over discovered words only.
    pub histogram: BTreeMap<usize, usize>,
}

impl FuzzReport {
    pub fn new(target: &str, trials_per_word: u32, results: Vec<WakeWordCandidate>) -> Self {
        let found: Vec<&WakeWordCandidate> = results.iter().filter(|c| is_discovered(c)).collect();
        FuzzReport {
            target: target.to_string(),
            target_metaphone: super::metaphone(target),
            trials_per_word,
            discovered: found.iter().map(|c| c.word.clone()).collect(),
            histogram: distance_histogram(found.iter().copied()),
            candidates: results,
        }
    }
}
