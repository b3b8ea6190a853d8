//! Extracting final answers from free-form model responses.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::score::{score_exact, score_pairing, score_transliteration, ExactNormalizer, PairingScore};
use crate::dataset::QuestionKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum ParsedAnswer {
    Text(String),
    /// item → choice, with items normalized by [`normalize_item`].
    Pairs(BTreeMap<String, String>),
    Unparseable,
}

impl ParsedAnswer {
    pub fn is_unparseable(&self) -> bool {
        matches!(self, ParsedAnswer::Unparseable)
    }
}

fn answer_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^(?:final\s+)?answer\s*(?:to\s+)?(?:question\s*)?(?:#?\s*(\d+))?\s*(?:[:=)\-]|\.\s)\s*(.*)$")
            .unwrap()
    })
}

fn pair_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"<?([A-Za-z][A-Za-z0-9]*(?:[_ ]\d+)?|\d+)>?\s*(?:=|:|->|→)\s*\(?([A-Za-z0-9]+)\)?").unwrap()
    })
}

fn token_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)<?token[_ ](\d+)>?\s*(?:=|:|->|→|-|is)\s*(?:description\s+|option\s+)?\(?([A-Za-z]{1,3})\b")
            .unwrap()
    })
}

fn choice_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b(?:answer|option|choice)\s*(?:is|would be|:)?\s*:?\s*\(?([A-Za-z])\)?(?:[\s.,;)]|$)")
            .unwrap()
    })
}

fn lone_letter_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\(?([A-Za-z])\)?[.)]?(?:\s|$)").unwrap())
}

/// Strips markdown decoration around a line.
fn clean_line(line: &str) -> String {
    let mut s = line.replace("**", "").replace("__", "").replace('`', "");
    loop {
        let t = s.trim_start();
        let stripped = t
            .strip_prefix('>')
            .or_else(|| t.strip_prefix('#'))
            .or_else(|| t.strip_prefix("- "))
            .or_else(|| t.strip_prefix("* "))
            .or_else(|| t.strip_prefix("+ "));
        match stripped {
            Some(rest) => s = rest.to_string(),
            None => return t.trim_end().to_string(),
        }
    }
}

/// Canonical form of a matching item: lowercased, `<>` removed, inner
/// spaces as underscores.
pub fn normalize_item(s: &str) -> String {
    s.trim()
        .trim_start_matches('<')
        .trim_end_matches('>')
        .trim()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join("_")
}

/// `a=B, c: D, <token_2> -> E` style pairs. Later items win.
pub fn parse_pairs(text: &str) -> BTreeMap<String, String> {
    pair_re()
        .captures_iter(text)
        .map(|c| (normalize_item(&c[1]), c[2].to_string()))
        .collect()
}

fn answer_content(lines: &[String], number: usize) -> Option<String> {
    let mut numbered = None;
    let mut any_numbered = false;
    let mut unnumbered = None;
    for (i, line) in lines.iter().enumerate() {
        let Some(c) = answer_line_re().captures(line) else {
            continue;
        };
        let mut content = c[2].trim().to_string();
        if content.is_empty() {
            content = lines[i + 1..]
                .iter()
                .find(|l| !l.is_empty())
                .cloned()
                .unwrap_or_default();
        }
        match c.get(1).map(|m| m.as_str().parse::<usize>()) {
            Some(Ok(n)) => {
                any_numbered = true;
                if n == number {
                    numbered = Some(content);
                }
            }
            _ => unnumbered = Some(content),
        }
    }
    if any_numbered {
        numbered
    } else {
        unnumbered
    }
}

fn strip_quotes(s: &str) -> &str {
    s.trim()
        .trim_matches(|c| matches!(c, '"' | '\'' | '“' | '”' | '*' | '_'))
        .trim()
}

/// Final answer to question `number` (1-based) of kind `kind`.
pub fn parse_answer(raw: &str, kind: QuestionKind, number: usize) -> ParsedAnswer {
    let lines: Vec<String> = raw.lines().map(clean_line).collect();
    if let Some(content) = answer_content(&lines, number) {
        let parsed = match kind {
            QuestionKind::Match => {
                let pairs = parse_pairs(&content);
                (!pairs.is_empty()).then_some(ParsedAnswer::Pairs(pairs))
            }
            QuestionKind::MultipleChoice => {
                let c = strip_quotes(&content);
                lone_letter_re()
                    .captures(c)
                    .or_else(|| choice_re().captures(c))
                    .map(|m| ParsedAnswer::Text(m[1].to_uppercase()))
                    .or_else(|| (!c.is_empty()).then(|| ParsedAnswer::Text(c.to_string())))
            }
            _ => {
                let c = strip_quotes(&content);
                (!c.is_empty()).then(|| ParsedAnswer::Text(c.to_string()))
            }
        };
        if let Some(p) = parsed {
            return p;
        }
    }
    match kind {
        QuestionKind::Match => {
            let mut pairs = BTreeMap::new();
            for line in &lines {
                for c in token_line_re().captures_iter(line) {
                    pairs.insert(format!("token_{}", &c[1]), c[2].to_string());
                }
            }
            if pairs.is_empty() {
                ParsedAnswer::Unparseable
            } else {
                ParsedAnswer::Pairs(pairs)
            }
        }
        QuestionKind::MultipleChoice => {
            let from_phrase = lines
                .iter()
                .rev()
                .find_map(|l| choice_re().captures_iter(l).last().map(|c| c[1].to_uppercase()));
            let from_lone = || {
                lines.iter().rev().find_map(|l| {
                    (l.chars().filter(|c| c.is_alphanumeric()).count() == 1)
                        .then(|| lone_letter_re().captures(l).map(|c| c[1].to_uppercase()))
                        .flatten()
                })
            };
            from_phrase
                .or_else(from_lone)
                .map(ParsedAnswer::Text)
                .unwrap_or(ParsedAnswer::Unparseable)
        }
        _ => ParsedAnswer::Unparseable,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Pairing,
    Exact,
    Transliteration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub metric: Metric,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairing: Option<PairingScore>,
}

/// Scores one parsed answer against its key. Unparseable answers score 0.
pub fn score_answer(kind: QuestionKind, parsed: &ParsedAnswer, answer_key: &str) -> QuestionScore {
    match kind {
        QuestionKind::Match => {
            let key = parse_pairs(answer_key);
            let got = match parsed {
                ParsedAnswer::Pairs(p) => p.clone(),
                ParsedAnswer::Text(t) => parse_pairs(t),
                ParsedAnswer::Unparseable => BTreeMap::new(),
            };
            let p = score_pairing(&got, &key);
            QuestionScore {
                metric: Metric::Pairing,
                score: p.accuracy(),
                pairing: Some(p),
            }
        }
        QuestionKind::Transliterate => QuestionScore {
            metric: Metric::Transliteration,
            score: match parsed {
                ParsedAnswer::Text(t) => score_transliteration(t, answer_key).unwrap_or(0.0),
                _ => 0.0,
            },
            pairing: None,
        },
        _ => QuestionScore {
            metric: Metric::Exact,
            score: match parsed {
                ParsedAnswer::Text(t) => score_exact(t, answer_key, ExactNormalizer::AlnumOnly),
                _ => 0.0,
            },
            pairing: None,
        },
    }
}
