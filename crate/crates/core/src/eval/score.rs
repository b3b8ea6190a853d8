use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Correct matches out of the key size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingScore {
    pub correct: usize,
    pub total: usize,
}

impl PairingScore {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

impl fmt::Display for PairingScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.correct, self.total)
    }
}

/// Compares answers against `key` entry by entry. Missing answers are wrong;
/// values compare trimmed and case-insensitively.
pub fn score_pairing<K: Ord, V: AsRef<str>, W: AsRef<str>>(
    parsed: &BTreeMap<K, V>,
    key: &BTreeMap<K, W>,
) -> PairingScore {
    let correct = key
        .iter()
        .filter(|(k, want)| {
            parsed
                .get(k)
                .is_some_and(|got| got.as_ref().trim().to_lowercase() == want.as_ref().trim().to_lowercase())
        })
        .count();
    PairingScore {
        correct,
        total: key.len(),
    }
}

/// Lowercases and collapses whitespace runs to single spaces.
pub fn normalize_text(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Normalized edit similarity in [0, 1].
pub fn score_transliteration(pred: &str, gold: &str) -> Result<f64, EvalError> {
    let g: Vec<char> = normalize_text(gold).chars().collect();
    if g.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let p: Vec<char> = normalize_text(pred).chars().collect();
    let d = levenshtein(&p, &g);
    Ok(1.0 - d as f64 / p.len().max(g.len()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactNormalizer {
    Strict,
    CaseFold,
    /// Keep only alphanumerics, lowercased.
    AlnumOnly,
}

impl ExactNormalizer {
    pub fn apply(&self, s: &str) -> String {
        match self {
            ExactNormalizer::Strict => s.to_string(),
            ExactNormalizer::CaseFold => s.to_lowercase(),
            ExactNormalizer::AlnumOnly => s
                .chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect(),
        }
    }
}

pub fn score_exact(pred: &str, gold: &str, normalizer: ExactNormalizer) -> f64 {
    if normalizer.apply(pred) == normalizer.apply(gold) {
        1.0
    } else {
        0.0
    }
}
