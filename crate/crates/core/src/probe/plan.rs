//! Probe plans: which words to play, and how the windows are laid out.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ProbeError;
use crate::stats::compare::{DEFAULT_THRESHOLD, DEFAULT_WINDOW_SECS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeWord {
    pub text: String,
    /// Pre-rendered audio of the word.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<PathBuf>,
    /// Seconds of audio; used when the sink cannot measure playback.
    #[serde(default = "default_word_secs")]
    pub duration: f64,
}

fn default_word_secs() -> f64 {
    1.0
}

impl ProbeWord {
    pub fn new(text: impl Into<String>) -> Self {
        ProbeWord {
            text: text.into(),
            audio: None,
            duration: default_word_secs(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum WordEntry {
    Text(String),
    Full(ProbeWord),
}

fn words_from_entries<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<ProbeWord>, D::Error> {
    let entries = Vec::<WordEntry>::deserialize(d)?;
    Ok(entries
        .into_iter()
        .map(|e| match e {
            WordEntry::Text(t) => ProbeWord::new(t),
            WordEntry::Full(w) => w,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePlan {
    #[serde(deserialize_with = "words_from_entries")]
    pub words: Vec<ProbeWord>,
    /// Length of each idle and probe window, seconds.
    #[serde(default = "default_window")]
    pub window_d: f64,
    /// Seconds between emissions inside a probe window.
    #[serde(default = "default_repeat")]
    pub repeat_every: f64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Restrict judging to these devices (MAC address or model name).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub devices: Option<Vec<String>>,
}

fn default_window() -> f64 {
    DEFAULT_WINDOW_SECS
}

fn default_repeat() -> f64 {
    10.0
}

fn default_repetitions() -> usize {
    3
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

impl ProbePlan {
    pub fn new(words: Vec<ProbeWord>) -> Self {
        ProbePlan {
            words,
            window_d: default_window(),
            repeat_every: default_repeat(),
            repetitions: default_repetitions(),
            threshold: default_threshold(),
            devices: None,
        }
    }

    pub fn validate(&self) -> Result<(), ProbeError> {
        let bad = |m: &str| Err(ProbeError::InvalidPlan(m.to_string()));
        if self.words.is_empty() {
            return bad("plan has no words");
        }
        if self.words.iter().any(|w| w.text.trim().is_empty()) {
            return bad("empty probe word");
        }
        if !(self.repeat_every > 0.0 && self.window_d > self.repeat_every && self.window_d.is_finite()) {
            return bad("need window_d > repeat_every > 0");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("threshold must be in [0, 1]");
        }
        Ok(())
    }

    /// Emissions per probe window.
    pub fn emissions_per_window(&self) -> usize {
        // Emissions start at k * repeat_every for every k with that offset
        // strictly inside the window.
        (self.window_d / self.repeat_every).ceil() as usize
    }

    /// Seconds the whole plan takes without failures.
    pub fn total_secs(&self) -> f64 {
        self.words.len() as f64 * self.repetitions as f64 * 2.0 * self.window_d
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ProbeError> {
        let plan: ProbePlan = toml::from_str(text).map_err(|e| ProbeError::InvalidPlan(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self, ProbeError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ProbeError::InvalidPlan(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_mixed_word_syntax() {
        let plan = ProbePlan::from_toml_str(
            r#"
            words = ["alexa", { text = "hey google", audio = "clips/hey_google.wav", duration = 1.4 }]
            "#,
        )
        .unwrap();
        assert_eq!(plan.words[0], ProbeWord::new("alexa"));
        assert_eq!(plan.words[1].audio.as_deref(), Some(Path::new("clips/hey_google.wav")));
        assert_eq!((plan.window_d, plan.repeat_every, plan.repetitions), (60.0, 10.0, 3));
        assert_eq!(plan.threshold, 0.42);
        assert_eq!(plan.emissions_per_window(), 6);
    }

    #[test]
    fn invalid_plans() {
        assert!(ProbePlan::from_toml_str("words = []").is_err());
        assert!(ProbePlan::from_toml_str("words = [\"a\"]\nwindow_d = 10\nrepeat_every = 10").is_err());
        assert!(ProbePlan::from_toml_str("words = [\"a\"]\nrepetitions = 0").is_err());
    }

    #[test]
    fn fifty_words_span() {
        let plan = ProbePlan::new((0..50).map(|i| ProbeWord::new(format!("w{i}"))).collect());
        assert_eq!(plan.total_secs(), 50.0 * 3.0 * 120.0);
    }
}
