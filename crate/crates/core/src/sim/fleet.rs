//! A simulated device fleet that probe sessions can run against.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use super::generate::simulate;
use super::model::DeviceModel;
use super::scenario::{EventKind, Scenario, ScenarioEvent};
use crate::model::{DeviceAddress, DeviceTrace, Timestamp};
use crate::probe::{AudioSink, Clock, Playback, ProbeError, ProbeWord, SessionCapture, VirtualClock};

/// Devices sharing one room: every played word is heard by all of them.
#[derive(Debug, Clone)]
pub struct SimulatedFleet {
    pub models: Vec<DeviceModel>,
    pub seed: u64,
    pub clock: VirtualClock,
    events: Arc<Mutex<Vec<ScenarioEvent>>>,
}

impl SimulatedFleet {
    pub fn new(models: Vec<DeviceModel>, seed: u64) -> Self {
        SimulatedFleet {
            models,
            seed,
            clock: VirtualClock::default(),
            events: Arc::default(),
        }
    }

    pub fn sink(&self) -> SimSink {
        SimSink {
            events: Arc::clone(&self.events),
        }
    }

    pub fn capture(&self) -> SimCapture {
        SimCapture {
            fleet: self.clone(),
            start: Timestamp::ZERO,
        }
    }

    pub fn events(&self) -> Vec<ScenarioEvent> {
        self.events.lock().expect("event log poisoned").clone()
    }
}

/// Loopback sink: each playback becomes a wake-word event for the fleet.
pub struct SimSink {
    events: Arc<Mutex<Vec<ScenarioEvent>>>,
}

impl AudioSink for SimSink {
    fn play(&mut self, word: &ProbeWord, clock: &dyn Clock) -> Result<Playback, ProbeError> {
        let start = clock.now();
        clock.sleep_until(start.add_secs(word.duration));
        self.events.lock().expect("event log poisoned").push(ScenarioEvent {
            time: start.as_secs_f64(),
            kind: EventKind::WakeWord(word.text.to_lowercase()),
            utterance: word.duration,
        });
        Ok(Playback {
            start,
            end: clock.now(),
        })
    }
}

/// Generates the fleet's traffic for the session once it is over.
pub struct SimCapture {
    fleet: SimulatedFleet,
    start: Timestamp,
}

impl SessionCapture for SimCapture {
    fn begin(&mut self, at: Timestamp) -> Result<(), ProbeError> {
        self.start = at;
        Ok(())
    }

    fn finish(&mut self, at: Timestamp) -> Result<BTreeMap<DeviceAddress, DeviceTrace>, ProbeError> {
        let scenario = Scenario {
            duration: at.as_secs_f64(),
            devices: self.fleet.models.clone(),
            events: self.fleet.events(),
            seed: self.fleet.seed,
        };
        let set = simulate(&scenario).map_err(|e| ProbeError::Capture(e.to_string()))?;
        Ok(set.traces)
    }

    fn device_names(&self) -> BTreeMap<DeviceAddress, String> {
        self.fleet
            .models
            .iter()
            .map(|m| (DeviceAddress::new(m.mac(), Some(m.ip())), m.name.clone()))
            .collect()
    }
}
