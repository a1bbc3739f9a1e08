//! CMU pronouncing-dictionary parsing and candidate selection.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::levenshtein::levenshtein;
use super::metaphone::metaphone;
use super::FuzzError;

/// Dictionary subset shipped with the crate: every 20th CMUdict headword,
/// the words of the activation table, and hand-written entries for table
/// words CMUdict lacks.
pub const FIXTURE_DICT: &str = include_str!("../../data/pronouncing-fixture.dict");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PronunciationEntry {
    pub word: String,
    pub phonemes: Vec<String>,
}

impl PronunciationEntry {
    pub fn phoneme_count(&self) -> usize {
        self.phonemes.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub entries: usize,
    pub comments: usize,
    pub skipped: usize,
    /// 1-based numbers of the skipped lines (first 100).
    pub skipped_lines: Vec<usize>,
}

fn parse_line(line: &str) -> Option<PronunciationEntry> {
    let mut parts = line.split_whitespace();
    let head = parts.next()?;
    // "WORD(2)" is an alternate pronunciation of WORD.
    let word = match head.find('(') {
        Some(i) if head.ends_with(')') && head[i + 1..head.len() - 1].chars().all(|c| c.is_ascii_digit()) => &head[..i],
        Some(_) => return None,
        None => head,
    };
    if word.is_empty() || !word.chars().all(|c| c.is_ascii_alphanumeric() || "'-._".contains(c)) {
        return None;
    }
    let mut phonemes = Vec::new();
    for p in parts {
        let base = p.trim_end_matches(|c: char| c.is_ascii_digit());
        if base.is_empty() || base.len() + 1 < p.len() || !base.chars().all(|c| c.is_ascii_uppercase()) {
            return None;
        }
        phonemes.push(base.to_string());
    }
    if phonemes.is_empty() {
        return None;
    }
    Some(PronunciationEntry {
        word: word.to_ascii_lowercase(),
        phonemes,
    })
}

/// Parses dictionary text. Lines starting with `;;;` are comments; blank
/// lines are ignored; malformed lines are skipped and counted.
pub fn parse_dictionary(text: &str) -> (Vec<PronunciationEntry>, ParseReport) {
    let mut report = ParseReport::default();
    let mut entries = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with(";;;") {
            report.comments += 1;
            continue;
        }
        match parse_line(line) {
            Some(e) => entries.push(e),
            None => {
                report.skipped += 1;
                if report.skipped_lines.len() < 100 {
                    report.skipped_lines.push(no + 1);
                }
            }
        }
    }
    report.entries = entries.len();
    (entries, report)
}

/// Reads a dictionary file. CMUdict releases are Latin-1; invalid UTF-8 is
/// replaced rather than rejected.
pub fn load_dictionary(path: impl AsRef<Path>) -> Result<(Vec<PronunciationEntry>, ParseReport), FuzzError> {
    let bytes = std::fs::read(path)?;
    Ok(parse_dictionary(&String::from_utf8_lossy(&bytes)))
}

pub fn fixture_dictionary() -> Vec<PronunciationEntry> {
    parse_dictionary(FIXTURE_DICT).0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WakeWordCandidate {
    pub word: String,
    pub phoneme_count: usize,
    pub metaphone: String,
    /// Edit distance between this word's code and the target's code.
    pub distance: usize,
    pub trials: u32,
    pub activations: u32,
}

impl WakeWordCandidate {
    pub fn new(word: &str, phoneme_count: usize, target_code: &str) -> Self {
        let code = metaphone(word);
        WakeWordCandidate {
            word: word.to_string(),
            phoneme_count,
            distance: levenshtein(&code, target_code),
            metaphone: code,
            trials: 0,
            activations: 0,
        }
    }
}

fn nearest_spellings(dict: &[PronunciationEntry], word: &str, n: usize) -> Vec<String> {
    let words: BTreeSet<&str> = dict.iter().map(|e| e.word.as_str()).collect();
    let mut scored: Vec<(usize, &str)> = words.into_iter().map(|w| (levenshtein(w, word), w)).collect();
    scored.sort();
    scored.into_iter().take(n).map(|(_, w)| w.to_string()).collect()
}

fn pronunciations<'a>(dict: &'a [PronunciationEntry], word: &str) -> Vec<&'a PronunciationEntry> {
    dict.iter().filter(|e| e.word == word).collect()
}

fn target_entries<'a>(dict: &'a [PronunciationEntry], target: &str) -> Result<Vec<&'a PronunciationEntry>, FuzzError> {
    let target = target.to_ascii_lowercase();
    let found = pronunciations(dict, &target);
    if found.is_empty() {
        return Err(FuzzError::UnknownWord {
            nearest: nearest_spellings(dict, &target, 5),
            word: target,
        });
    }
    Ok(found)
}

/// Words having some pronunciation whose phoneme count is in `counts`,
/// one candidate per word, sorted by word. The candidate's phoneme count is
/// the smallest qualifying one.
pub fn select_by_counts(
    dict: &[PronunciationEntry],
    target: &str,
    counts: &BTreeSet<usize>,
) -> Result<Vec<WakeWordCandidate>, FuzzError> {
    let target_code = metaphone(&target_entries(dict, target)?[0].word);
    let mut best: BTreeMap<&str, usize> = BTreeMap::new();
    for e in dict {
        let n = e.phoneme_count();
        if counts.contains(&n) {
            best.entry(e.word.as_str())
                .and_modify(|m| *m = (*m).min(n))
                .or_insert(n);
        }
    }
    Ok(best
        .into_iter()
        .map(|(w, n)| WakeWordCandidate::new(w, n, &target_code))
        .collect())
}

/// Words whose phoneme count is within `tolerance` of the target's (any
/// pronunciation of either).
pub fn select_candidates(
    dict: &[PronunciationEntry],
    target: &str,
    tolerance: usize,
) -> Result<Vec<WakeWordCandidate>, FuzzError> {
    let counts: BTreeSet<usize> = target_entries(dict, target)?
        .iter()
        .flat_map(|e| {
            let n = e.phoneme_count();
            n.saturating_sub(tolerance)..=n + tolerance
        })
        .collect();
    select_by_counts(dict, target, &counts)
}

/// Candidates for an explicit word list, in the given order.
pub fn candidates_for<'w>(
    dict: &[PronunciationEntry],
    target: &str,
    words: impl IntoIterator<Item = &'w str>,
) -> Result<Vec<WakeWordCandidate>, FuzzError> {
    let target_code = metaphone(&target_entries(dict, target)?[0].word);
    words
        .into_iter()
        .map(|w| {
            let e = target_entries(dict, w)?;
            let n = e.iter().map(|e| e.phoneme_count()).min().unwrap_or(0);
            Ok(WakeWordCandidate::new(&e[0].word, n, &target_code))
        })
        .collect()
}
