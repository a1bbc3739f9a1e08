//! Scenarios: which devices, which audio events, over how long.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{library_model, DeviceModel};
use super::SimError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    WakeWord(String),
    Noise(String),
}

impl EventKind {
    pub fn trigger(&self) -> &str {
        match self {
            EventKind::WakeWord(w) | EventKind::Noise(w) => w,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    /// Seconds from scenario start.
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
    /// Seconds of sound (spoken command or noise clip).
    #[serde(default = "default_utterance")]
    pub utterance: f64,
}

fn default_utterance() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub duration: f64,
    pub devices: Vec<DeviceModel>,
    pub events: Vec<ScenarioEvent>,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(SimError::InvalidScenario(format!(
                "duration {} must be >= 0",
                self.duration
            )));
        }
        for d in &self.devices {
            d.validate()?;
        }
        let mut names: Vec<_> = self.devices.iter().map(|d| d.mac()).collect();
        names.sort();
        names.dedup();
        if names.len() != self.devices.len() {
            return Err(SimError::InvalidScenario("device names must be distinct".into()));
        }
        if let Some(e) = self
            .events
            .iter()
            .find(|e| !(0.0..=self.duration).contains(&e.time) || !(e.utterance >= 0.0))
        {
            return Err(SimError::InvalidScenario(format!(
                "event at {}s (utterance {}s) outside [0, {}]",
                e.time, e.utterance, self.duration
            )));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        file.into_scenario()
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// A device given by library name or defined inline.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DeviceSpec {
    Named(String),
    Inline(Box<DeviceModel>),
}

/// Generates wake-word (or noise) events at a fixed interval.
#[derive(Debug, Clone, Deserialize)]
pub struct ControlledSpec {
    pub device: String,
    pub interval: f64,
    pub count: usize,
}

/// On-disk scenario description (TOML).
#[derive(Debug, Clone, Deserialize)]
pub struct ScenarioFile {
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    pub devices: Vec<DeviceSpec>,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
    #[serde(default)]
    pub controlled: Option<ControlledSpec>,
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario, SimError> {
        let devices = self
            .devices
            .into_iter()
            .map(|d| match d {
                DeviceSpec::Named(n) => library_model(&n).ok_or(SimError::UnknownModel(n)),
                DeviceSpec::Inline(m) => Ok(*m),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut events = self.events;
        let mut duration = self.duration;
        if let Some(c) = self.controlled {
            let model = devices
                .iter()
                .find(|d| d.name.eq_ignore_ascii_case(&c.device))
                .ok_or_else(|| SimError::UnknownModel(c.device.clone()))?;
            let gen = controlled_scenario(model, c.interval, c.count, self.seed)?;
            events.extend(gen.events);
            duration = Some(duration.unwrap_or(0.0).max(gen.duration));
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        let duration = duration
            .or_else(|| events.last().map(|e| e.time + 60.0))
            .ok_or_else(|| SimError::InvalidScenario("duration missing and no events".into()))?;
        let s = Scenario {
            duration,
            devices,
            events,
            seed: self.seed,
        };
        s.validate()?;
        Ok(s)
    }
}

/// Shortest and longest spoken command, seconds.
pub const UTTERANCE_RANGE: (f64, f64) = (3.0, 7.0);

/// `count` trigger events for the device, one per `interval` seconds.
///
/// Each event sits at a random offset inside its slot with at least a
/// tenth of the slot (capped at 10 s) free on either side, so streams
/// never spill into the next slot.
pub fn controlled_scenario(device: &DeviceModel, interval: f64, count: usize, seed: u64) -> Result<Scenario, SimError> {
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(SimError::InvalidScenario(format!("interval {interval} must be > 0")));
    }
    device.validate()?;
    let mut events = Vec::with_capacity(count);
    if count > 0 {
        let kind = device
            .primary_trigger()
            .ok_or_else(|| SimError::InvalidScenario(format!("{} has no trigger", device.name)))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x636f_6e74);
        let margin = (interval * 0.1).min(10.0);
        let latest = (interval - margin - UTTERANCE_RANGE.1 - 3.0).max(margin);
        for i in 0..count {
            let offset = rng.random_range(margin..=latest);
            let utterance = rng.random_range(UTTERANCE_RANGE.0..=UTTERANCE_RANGE.1);
            events.push(ScenarioEvent {
                time: i as f64 * interval + offset,
                kind: kind.clone(),
                utterance,
            });
        }
    }
    Ok(Scenario {
        duration: interval * count as f64,
        devices: vec![device.clone()],
        events,
        seed,
    })
}
