//! Device behavior models and the shipped model library.

use std::collections::{BTreeMap, BTreeSet};
use std::net::{IpAddr, Ipv4Addr};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::model::MacAddr;

pub const MIN_PACKET: u32 = 40;
pub const MAX_PACKET: u32 = 1460;

/// Normal distribution given as mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub const fn new(mean: f64, sd: f64) -> Self {
        MeanSd { mean, sd }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sd <= 0.0 {
            return self.mean;
        }
        Normal::new(self.mean, self.sd)
            .expect("sd checked positive")
            .sample(rng)
    }

    /// A packet size drawn from this distribution, clamped to `[lo, hi]`.
    pub fn sample_size<R: Rng + ?Sized>(&self, rng: &mut R, lo: u32, hi: u32) -> u32 {
        self.sample(rng).round().clamp(f64::from(lo), f64::from(hi)) as u32
    }
}

/// A recurring traffic burst of an idle device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdleBurst {
    #[serde(default)]
    pub name: String,
    /// Mean seconds between burst starts.
    pub period: f64,
    /// Relative jitter of the period, in [0, 1).
    pub jitter: f64,
    /// Outbound bytes per burst.
    pub bytes: MeanSd,
    /// Seconds over which a burst's packets are spread.
    pub duration: f64,
    pub packet_size: MeanSd,
    /// Inbound packets per outbound packet.
    #[serde(default)]
    pub inbound_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AudioStream {
    /// Bits per second.
    pub bitrate: f64,
    pub packet_size: MeanSd,
    /// Delay between the trigger and the first audio packet.
    pub pre_roll: f64,
    /// Streaming continues this long after the utterance ends.
    #[serde(default = "default_trailer")]
    pub trailer: f64,
}

fn default_trailer() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub name: String,
    #[serde(default)]
    pub idle_bursts: Vec<IdleBurst>,
    #[serde(default)]
    pub audio_stream: Option<AudioStream>,
    /// Words the device wakes on with certainty unless overridden in
    /// `activation_model`.
    #[serde(default)]
    pub wake_words: BTreeSet<String>,
    /// Trigger (word or noise name) to activation probability.
    #[serde(default)]
    pub activation_model: BTreeMap<String, f64>,
}

impl DeviceModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidModel(self.name.clone(), msg));
        if self.name.is_empty() {
            return bad("empty name".into());
        }
        for b in &self.idle_bursts {
            if !(b.period > 0.0) {
                return bad(format!("burst {:?}: period must be > 0", b.name));
            }
            if !(0.0..1.0).contains(&b.jitter) {
                return bad(format!("burst {:?}: jitter must be in [0, 1)", b.name));
            }
            if !(b.duration >= 0.0) || !(b.inbound_ratio >= 0.0) {
                return bad(format!("burst {:?}: negative duration or inbound ratio", b.name));
            }
        }
        if let Some(a) = &self.audio_stream {
            if !(a.bitrate > 0.0) {
                return bad("audio bitrate must be > 0".into());
            }
            if !(a.pre_roll >= 0.0 && a.trailer >= 0.0) {
                return bad("negative pre-roll or trailer".into());
            }
        }
        if let Some((k, p)) = self.activation_model.iter().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return bad(format!("activation probability {p} for {k:?} outside [0, 1]"));
        }
        Ok(())
    }

    /// Probability that the trigger makes the device stream audio.
    pub fn activation_probability(&self, trigger: &str) -> f64 {
        if self.audio_stream.is_none() {
            return 0.0;
        }
        let key = trigger.to_lowercase();
        match self.activation_model.get(&key) {
            Some(&p) => p,
            None if self.wake_words.contains(&key) => 1.0,
            None => 0.0,
        }
    }

    /// The trigger used for controlled runs: the first wake word, otherwise
    /// the most likely noise trigger.
    pub fn primary_trigger(&self) -> Option<super::EventKind> {
        if let Some(w) = self.wake_words.iter().next() {
            return Some(super::EventKind::WakeWord(w.clone()));
        }
        self.activation_model
            .iter()
            .filter(|(_, &p)| p > 0.0)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| super::EventKind::Noise(k.clone()))
    }

    /// Stable pseudo-random MAC derived from the model name.
    pub fn mac(&self) -> MacAddr {
        let h = fnv1a(self.name.as_bytes()).to_be_bytes();
        MacAddr([0x02, h[3], h[4], h[5], h[6], h[7]])
    }

    pub fn ip(&self) -> IpAddr {
        let h = fnv1a(self.name.as_bytes()).to_be_bytes();
        IpAddr::V4(Ipv4Addr::new(192, 168, 1 + h[0] % 250, 2 + h[1] % 250))
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn burst(name: &str, period: f64, jitter: f64, bytes: MeanSd, duration: f64, packet_size: MeanSd) -> IdleBurst {
    IdleBurst {
        name: name.into(),
        period,
        jitter,
        bytes,
        duration,
        packet_size,
        inbound_ratio: 0.5,
    }
}

fn audio(bitrate: f64, pre_roll: f64) -> Option<AudioStream> {
    Some(AudioStream {
        bitrate,
        packet_size: MeanSd::new(1200.0, 150.0),
        pre_roll,
        trailer: 1.5,
    })
}

fn words(ws: &[&str]) -> BTreeSet<String> {
    ws.iter().map(|w| w.to_string()).collect()
}

fn probs(ps: &[(&str, f64)]) -> BTreeMap<String, f64> {
    ps.iter().map(|(k, p)| (k.to_string(), *p)).collect()
}

/// Keep-alive chatter plus the small / medium / large periodic bursts seen
/// on idle smart speakers.
fn speaker_idle(keepalive: f64, small: f64, medium: f64, size: MeanSd) -> Vec<IdleBurst> {
    vec![
        burst("keepalive", keepalive, 0.5, MeanSd::new(400.0, 250.0), 0.2, size),
        burst("small", small, 0.1, MeanSd::new(3_000.0, 800.0), 1.0, size),
        burst("medium", medium, 0.1, MeanSd::new(10_000.0, 3_000.0), 2.0, size),
        burst(
            "large",
            36_000.0,
            0.1,
            MeanSd::new(1.5e6, 3e5),
            90.0,
            MeanSd::new(1000.0, 400.0),
        ),
    ]
}

fn camera_idle(keepalive: f64, size: MeanSd) -> Vec<IdleBurst> {
    vec![
        burst("keepalive", keepalive, 0.4, MeanSd::new(600.0, 400.0), 0.3, size),
        burst("status", 60.0, 0.2, MeanSd::new(8_000.0, 2_000.0), 2.0, size),
    ]
}

/// The eight shipped device models.
pub fn library() -> Vec<DeviceModel> {
    vec![
        DeviceModel {
            name: "EchoDot".into(),
            idle_bursts: speaker_idle(0.6, 20.0, 300.0, MeanSd::new(400.0, 380.0)),
            audio_stream: audio(256_000.0, 0.3),
            wake_words: words(&["alexa"]),
            activation_model: probs(&[("alexa", 0.98)]),
        },
        DeviceModel {
            name: "GoogleHome".into(),
            idle_bursts: speaker_idle(0.7, 30.0, 600.0, MeanSd::new(380.0, 400.0)),
            audio_stream: audio(192_000.0, 0.4),
            wake_words: words(&["hey google", "ok google"]),
            activation_model: probs(&[("hey google", 0.97), ("ok google", 0.97)]),
        },
        DeviceModel {
            name: "HomePod".into(),
            idle_bursts: speaker_idle(0.8, 25.0, 450.0, MeanSd::new(450.0, 400.0)),
            audio_stream: audio(160_000.0, 0.5),
            wake_words: words(&["hey siri"]),
            activation_model: probs(&[("hey siri", 0.96)]),
        },
        DeviceModel {
            name: "HiveHub360".into(),
            idle_bursts: speaker_idle(0.6, 15.0, 900.0, MeanSd::new(350.0, 380.0)),
            audio_stream: audio(192_000.0, 0.5),
            wake_words: BTreeSet::new(),
            activation_model: probs(&[("dog-bark", 0.97), ("glass-break", 0.95)]),
        },
        DeviceModel {
            name: "NetatmoWelcome".into(),
            idle_bursts: camera_idle(0.8, MeanSd::new(300.0, 350.0)),
            audio_stream: audio(64_000.0, 1.0),
            wake_words: BTreeSet::new(),
            activation_model: probs(&[("smoke-alarm", 0.9)]),
        },
        DeviceModel {
            name: "NetatmoPresence".into(),
            idle_bursts: camera_idle(0.7, MeanSd::new(350.0, 380.0)),
            audio_stream: audio(64_000.0, 1.0),
            wake_words: BTreeSet::new(),
            activation_model: probs(&[("smoke-alarm", 0.9)]),
        },
        DeviceModel {
            name: "HiveView".into(),
            idle_bursts: camera_idle(1.0, MeanSd::new(420.0, 400.0)),
            audio_stream: audio(96_000.0, 1.0),
            wake_words: BTreeSet::new(),
            activation_model: probs(&[("dog-bark", 0.5), ("smoke-alarm", 0.8)]),
        },
        DeviceModel {
            name: "NestProtect".into(),
            idle_bursts: Vec::new(),
            audio_stream: None,
            wake_words: BTreeSet::new(),
            activation_model: BTreeMap::new(),
        },
    ]
}

pub fn library_model(name: &str) -> Option<DeviceModel> {
    library().into_iter().find(|m| m.name.eq_ignore_ascii_case(name))
}

/// The four models used for the controlled data sets.
pub const CONTROLLED_MODELS: [&str; 4] = ["EchoDot", "GoogleHome", "HomePod", "HiveHub360"];
